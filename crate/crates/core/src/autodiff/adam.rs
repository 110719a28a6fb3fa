use alloc::vec::Vec;
use num_traits::Float;

use super::{Array, Scalar};
use crate::error::{Error, Result};

/// ADAM hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates for a list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Array<T>>,
    pub v: Vec<Array<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, shapes: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let (m, v) = shapes.into_iter().map(|s| (Array::zeros(s), Array::zeros(s))).unzip();
        Self { config, step: 0, m, v }
    }

    /// One bias-corrected ADAM update of `params` in place.
    pub fn update(&mut self, params: &mut [Array<T>], grads: &[&Array<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape {
                context: "adam parameter count",
                left: alloc::vec![self.m.len()],
                right: alloc::vec![params.len(), grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            for s in [p.shape(), g.shape()] {
                if s != m.shape() {
                    return Err(Error::Shape { context: "adam moment", left: m.shape().to_vec(), right: s.to_vec() });
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - Float::powf(c.beta1, t);
        let bc2 = 1.0 - Float::powf(c.beta2, t);
        let step_size = T::of(c.lr / bc1);
        let bc2_sqrt = T::of(Float::sqrt(bc2));
        let (b1, b2, eps) = (T::of(c.beta1), T::of(c.beta2), T::of(c.eps));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for (i, gi) in g.data().iter().enumerate() {
                md[i] = b1 * md[i] + one_b1 * *gi;
                vd[i] = b2 * vd[i] + one_b2 * *gi * *gi;
                pd[i] -= step_size * md[i] / (vd[i].sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_counts_step() {
        let mut p = [Array::<f64>::from_f64(&[2], &[1.0, -1.0]).unwrap()];
        let g = Array::zeros(&[2]);
        let mut st = AdamState::new(AdamConfig::default(), [p[0].shape()]);
        st.update(&mut p, &[&g]).unwrap();
        assert_eq!(p[0].data(), &[1.0, -1.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn constant_gradient_steps_approach_lr_sign() {
        // Closed form: with constant g, m_t/(1-b1^t) = g and v_t/(1-b2^t) = g^2,
        // so every bias-corrected step is lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        for g0 in [3.0f64, -0.02] {
            let mut p = [Array::<f64>::zeros(&[1])];
            let g = Array::from_f64(&[1], &[g0]).unwrap();
            let mut st = AdamState::new(cfg, [p[0].shape()]);
            let mut prev = 0.0;
            for _ in 0..1000 {
                st.update(&mut p, &[&g]).unwrap();
                let cur = p[0].data()[0];
                let expected = -cfg.lr * g0 / (g0.abs() + cfg.eps);
                assert!(((cur - prev) - expected).abs() < 1e-12);
                prev = cur;
            }
            assert!((prev + 1000.0 * cfg.lr * g0.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn default_learning_rate() {
        assert_eq!(AdamConfig::default().lr, 2e-4);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = [Array::<f32>::zeros(&[2])];
        let g = Array::zeros(&[3]);
        let mut st = AdamState::new(AdamConfig::default(), [p[0].shape()]);
        assert!(matches!(st.update(&mut p, &[&g]), Err(Error::Shape { .. })));
        assert_eq!(st.step, 0);
    }
}
