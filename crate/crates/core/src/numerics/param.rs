use ndarray::{Array, Dimension, Zip};

use crate::error::{Error, Result};

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamWConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid AdamW hyperparameters {self:?}"
            )))
        }
    }
}

/// A learnable array together with its gradient and AdamW moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<D: Dimension> {
    pub value: Array<f64, D>,
    pub grad: Array<f64, D>,
    m: Array<f64, D>,
    v: Array<f64, D>,
    step_count: u64,
}

impl<D: Dimension> ParamTensor<D> {
    pub fn new(value: Array<f64, D>) -> Self {
        let zeros = Array::zeros(value.raw_dim());
        ParamTensor {
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
            step_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Array<f64, D> {
        &self.m
    }

    pub fn second_moment(&self) -> &Array<f64, D> {
        &self.v
    }

    /// Replaces the stored gradient. Shapes must match.
    pub fn set_grad(&mut self, grad: &Array<f64, D>) -> Result<()> {
        if grad.shape() != self.value.shape() {
            return Err(Error::Dimension(format!(
                "gradient shape {:?} does not match parameter {:?}",
                grad.shape(),
                self.value.shape()
            )));
        }
        self.grad.assign(grad);
        Ok(())
    }

    /// Clears optimizer state; keeps the value.
    pub fn reset_optimizer(&mut self) {
        self.grad.fill(0.0);
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.step_count = 0;
    }

    /// One AdamW step with decoupled weight decay.
    ///
    /// A non-finite gradient leaves the tensor untouched and returns
    /// [`Error::Numeric`].
    pub fn adamw_step(&mut self, cfg: &AdamWConfig) -> Result<()> {
        cfg.validate()?;
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient passed to AdamW".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        Zip::from(&mut self.value)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(&self.grad)
            .for_each(|p, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *p);
            });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1};

    #[test]
    fn zero_grad_applies_pure_decay() {
        let cfg = AdamWConfig::default();
        let mut p = ParamTensor::new(arr1(&[1.0, -2.0, 0.5]));
        let before = p.value.clone();
        p.adamw_step(&cfg).unwrap();
        let factor = 1.0 - cfg.lr * cfg.weight_decay;
        for (a, b) in p.value.iter().zip(before.iter()) {
            assert_eq!(*a, b - cfg.lr * (0.0 + cfg.weight_decay * b));
            assert!((a - b * factor).abs() < 1e-15);
        }
        assert_eq!(p.step_count(), 1);
    }

    #[test]
    fn zero_grad_without_decay_is_a_no_op() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = ParamTensor::new(arr1(&[1.0, -2.0]));
        for _ in 0..5 {
            p.adamw_step(&cfg).unwrap();
        }
        assert_eq!(p.value, arr1(&[1.0, -2.0]));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamWConfig {
            eps: 1e-300,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = ParamTensor::new(arr1(&[0.0, 0.0, 0.0]));
        p.set_grad(&arr1(&[3.0, -0.01, 250.0])).unwrap();
        p.adamw_step(&cfg).unwrap();
        for (v, s) in p.value.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - s * cfg.lr).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = ParamTensor::new(arr1(&[1.0]));
        p.set_grad(&arr1(&[f64::NAN])).unwrap();
        assert!(matches!(
            p.adamw_step(&AdamWConfig::default()),
            Err(Error::Numeric(_))
        ));
        assert_eq!(p.value[0], 1.0);
        assert_eq!(p.step_count(), 0);
        assert_eq!(p.first_moment()[0], 0.0);
    }

    #[test]
    fn ten_step_quadratic_matches_reference() {
        // f(x) = 0.5 * a * (x - c)^2, gradient a * (x - c).
        let (a, c) = (3.0, 0.7);
        let cfg = AdamWConfig {
            lr: 0.05,
            ..AdamWConfig::default()
        };
        let mut p = ParamTensor::new(Array1::from(vec![-1.3]));

        let (mut x, mut m, mut v) = (-1.3f64, 0.0f64, 0.0f64);
        for step in 1..=10 {
            p.set_grad(&arr1(&[a * (p.value[0] - c)])).unwrap();
            p.adamw_step(&cfg).unwrap();

            let g = a * (x - c);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(step));
            let vh = v / (1.0 - 0.999f64.powi(step));
            x -= 0.05 * (mh / (vh.sqrt() + 1e-8) + 1e-4 * x);

            assert!((p.value[0] - x).abs() <= 1e-12, "step {step}");
        }
        assert!(p.second_moment().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn moments_start_at_zero() {
        let p = ParamTensor::new(ndarray::Array2::<f64>::ones((2, 3)));
        assert!(p.first_moment().iter().all(|&v| v == 0.0));
        assert!(p.second_moment().iter().all(|&v| v == 0.0));
        assert_eq!(p.grad.shape(), p.value.shape());
    }
}
