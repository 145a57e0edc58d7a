use ndarray::{Array1, Array2, Axis};

use super::Batch3;
use crate::error::{Error, Result};

/// Gradients of a pointwise (1×1) convolution.
#[derive(Debug, Clone)]
pub struct Conv1x1Grads {
    pub input: Batch3,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients of a depthwise convolution.
#[derive(Debug, Clone)]
pub struct DepthwiseGrads {
    pub input: Batch3,
    pub kernel: Array2<f64>,
    pub bias: Array1<f64>,
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn check_conv1x1(input: &Batch3, weight: &Array2<f64>, bias: &Array1<f64>) -> Result<()> {
    let (c_in, c_out) = weight.dim();
    if input.channels() != c_in {
        return Err(Error::Dimension(format!(
            "conv1x1: input has {} channels, weight expects {c_in}",
            input.channels()
        )));
    }
    if bias.len() != c_out {
        return Err(Error::Dimension(format!(
            "conv1x1: bias has {} entries, weight produces {c_out}",
            bias.len()
        )));
    }
    Ok(())
}

/// Pointwise channel mixing: `out[b,t,:] = input[b,t,:] · weight + bias`.
///
/// All `B·W` timesteps are stacked into one matrix product, so timesteps never
/// interact.
pub fn conv1x1_forward(input: &Batch3, weight: &Array2<f64>, bias: &Array1<f64>) -> Result<Batch3> {
    check_conv1x1(input, weight, bias)?;
    let (b, w, c_in) = input.dims();
    let c_out = weight.ncols();
    let rows = input
        .view()
        .into_shape_with_order((b * w, c_in))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let mut out = standard(rows.dot(weight));
    out += bias;
    let out = out
        .into_shape_with_order((b, w, c_out))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(Batch3::new(out))
}

pub fn conv1x1_backward(
    input: &Batch3,
    weight: &Array2<f64>,
    grad_out: &Batch3,
) -> Result<Conv1x1Grads> {
    let (c_in, c_out) = weight.dim();
    let (b, w, ci) = input.dims();
    if ci != c_in || grad_out.dims() != (b, w, c_out) {
        return Err(Error::Dimension(format!(
            "conv1x1 backward: input {:?}, weight {:?}, grad_out {:?}",
            input.dims(),
            weight.dim(),
            grad_out.dims()
        )));
    }
    let x = input
        .view()
        .into_shape_with_order((b * w, c_in))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let g = grad_out
        .view()
        .into_shape_with_order((b * w, c_out))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let grad_weight = x.t().dot(&g);
    let grad_bias = g.sum_axis(Axis(0));
    let grad_input = standard(g.dot(&weight.t()))
        .into_shape_with_order((b, w, c_in))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(Conv1x1Grads {
        input: Batch3::new(grad_input),
        weight: grad_weight,
        bias: grad_bias,
    })
}

fn check_depthwise(input: &Batch3, kernel: &Array2<f64>, bias: &Array1<f64>) -> Result<()> {
    let (k, h) = kernel.dim();
    if k % 2 == 0 {
        return Err(Error::Config(format!(
            "depthwise kernel size must be odd, got {k}"
        )));
    }
    if input.channels() != h || bias.len() != h {
        return Err(Error::Dimension(format!(
            "depthwise: input channels {}, kernel channels {h}, bias {}",
            input.channels(),
            bias.len()
        )));
    }
    Ok(())
}

/// Per-channel temporal filtering with symmetric zero padding of `(K-1)/2`.
///
/// `out[b,t,c] = Σ_k input[b, t+k-p, c] · kernel[k,c] + bias[c]`, where
/// out-of-range input positions read as zero. Output length equals input
/// length; channels never mix.
pub fn depthwise_conv_forward(
    input: &Batch3,
    kernel: &Array2<f64>,
    bias: &Array1<f64>,
) -> Result<Batch3> {
    check_depthwise(input, kernel, bias)?;
    let (b, w, h) = input.dims();
    let k = kernel.nrows();
    let pad = (k - 1) / 2;
    let kern = kernel.as_standard_layout();
    let kern = kern.as_slice().expect("standard layout");
    let bias = bias.as_slice().expect("contiguous bias");

    let mut out = Batch3::zeros(b, w, h);
    let x = input.as_slice();
    let y = out.as_slice_mut();
    for bi in 0..b {
        let base = bi * w * h;
        for t in 0..w {
            let row = &mut y[base + t * h..base + (t + 1) * h];
            row.copy_from_slice(bias);
            for (ki, taps) in kern.chunks_exact(h).enumerate() {
                let Some(s) = (t + ki).checked_sub(pad).filter(|&s| s < w) else {
                    continue;
                };
                let src = &x[base + s * h..base + (s + 1) * h];
                for ((o, &xv), &kv) in row.iter_mut().zip(src).zip(taps) {
                    *o += xv * kv;
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`depthwise_conv_forward`].
///
/// The input gradient is the correlation of `grad_out` with the flipped
/// kernel under the same zero padding.
pub fn depthwise_conv_backward(
    input: &Batch3,
    kernel: &Array2<f64>,
    grad_out: &Batch3,
) -> Result<DepthwiseGrads> {
    let (k, h) = kernel.dim();
    if k % 2 == 0 {
        return Err(Error::Config(format!(
            "depthwise kernel size must be odd, got {k}"
        )));
    }
    if input.channels() != h || grad_out.dims() != input.dims() {
        return Err(Error::Dimension(format!(
            "depthwise backward: input {:?}, kernel {:?}, grad_out {:?}",
            input.dims(),
            kernel.dim(),
            grad_out.dims()
        )));
    }
    let (b, w, _) = input.dims();
    let pad = (k - 1) / 2;
    let kern = kernel.as_standard_layout();
    let kern = kern.as_slice().expect("standard layout");

    let mut grad_input = Batch3::zeros(b, w, h);
    let mut grad_kernel = vec![0.0; k * h];
    let mut grad_bias = vec![0.0; h];
    let x = input.as_slice();
    let g = grad_out.as_slice();
    let gx = grad_input.as_slice_mut();
    for bi in 0..b {
        let base = bi * w * h;
        for t in 0..w {
            let g_row = &g[base + t * h..base + (t + 1) * h];
            for (gb, &gv) in grad_bias.iter_mut().zip(g_row) {
                *gb += gv;
            }
            for ki in 0..k {
                let Some(s) = (t + ki).checked_sub(pad).filter(|&s| s < w) else {
                    continue;
                };
                let taps = &kern[ki * h..(ki + 1) * h];
                let x_row = &x[base + s * h..base + (s + 1) * h];
                let gk_row = &mut grad_kernel[ki * h..(ki + 1) * h];
                for ((gk, &xv), &gv) in gk_row.iter_mut().zip(x_row).zip(g_row) {
                    *gk += gv * xv;
                }
                let gx_row = &mut gx[base + s * h..base + (s + 1) * h];
                for ((gi, &kv), &gv) in gx_row.iter_mut().zip(taps).zip(g_row) {
                    *gi += gv * kv;
                }
            }
        }
    }
    Ok(DepthwiseGrads {
        input: grad_input,
        kernel: Array2::from_shape_vec((k, h), grad_kernel)
            .map_err(|e| Error::Dimension(e.to_string()))?,
        bias: Array1::from(grad_bias),
    })
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

/// `d/dx [x · Φ(x)] = Φ(x) + x · φ(x)`.
pub fn gelu_derivative(x: f64) -> f64 {
    std_normal_cdf(x) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn gelu_forward(input: &Batch3) -> Batch3 {
    Batch3::new(input.array().mapv(gelu))
}

pub fn gelu_backward(input: &Batch3, grad_out: &Batch3) -> Result<Batch3> {
    input.ensure_same_shape(grad_out, "gelu backward")?;
    let mut grad = grad_out.clone();
    for (g, &x) in grad.as_slice_mut().iter_mut().zip(input.as_slice()) {
        *g *= gelu_derivative(x);
    }
    Ok(grad)
}
