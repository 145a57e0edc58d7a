use super::Batch3;
use crate::error::{Error, Result};

/// Quadratic-to-linear transition point of the smooth-L1 loss.
pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

fn huber_term(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a <= delta {
        0.5 * e * e / delta
    } else {
        a - 0.5 * delta
    }
}

fn huber_slope(e: f64, delta: f64) -> f64 {
    if e.abs() <= delta {
        e / delta
    } else {
        e.signum()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!(
            "huber delta must be positive, got {delta}"
        )));
    }
    Ok(())
}

/// Mean smooth-L1 loss over every entry of `pred - target`.
pub fn huber(pred: &Batch3, target: &Batch3, delta: f64) -> Result<f64> {
    pred.ensure_same_shape(target, "huber")?;
    check_delta(delta)?;
    let n = pred.as_slice().len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| huber_term(p - t, delta))
        .sum();
    Ok(total / n as f64)
}

/// `d huber(pred, target) / d pred`.
pub fn huber_backward(pred: &Batch3, target: &Batch3, delta: f64) -> Result<Batch3> {
    pred.ensure_same_shape(target, "huber backward")?;
    check_delta(delta)?;
    let n = pred.as_slice().len().max(1) as f64;
    let mut grad = pred.clone();
    for (g, &t) in grad.as_slice_mut().iter_mut().zip(target.as_slice()) {
        *g = huber_slope(*g - t, delta) / n;
    }
    Ok(grad)
}

/// Forward difference along time: `B×W×C → B×(W-1)×C`.
pub fn first_diff(input: &Batch3) -> Result<Batch3> {
    let (b, w, c) = input.dims();
    if w < 2 {
        return Err(Error::Dimension(format!(
            "first difference needs at least 2 timesteps, got {w}"
        )));
    }
    let x = input.view();
    let out = &x.slice(ndarray::s![.., 1.., ..]) - &x.slice(ndarray::s![.., ..w - 1, ..]);
    debug_assert_eq!(out.dim(), (b, w - 1, c));
    Ok(Batch3::new(out))
}

/// Adjoint of [`first_diff`]: maps a `B×(W-1)×C` gradient back to `B×W×C`.
pub fn first_diff_adjoint(grad: &Batch3) -> Batch3 {
    let (b, wm1, c) = grad.dims();
    let mut out = Batch3::zeros(b, wm1 + 1, c);
    {
        let mut o = out.view_mut();
        let g = grad.view();
        o.slice_mut(ndarray::s![.., 1.., ..]).scaled_add(1.0, &g);
        o.slice_mut(ndarray::s![.., ..wm1, ..]).scaled_add(-1.0, &g);
    }
    out
}
