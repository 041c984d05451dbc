use super::layers::Param;
use super::tensor::Scalar;
use crate::error::{Error, Result};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 1e-4;

    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }

    /// Applies one update to every parameter from its accumulated gradient.
    ///
    /// All gradients are checked before anything is modified, so a failed
    /// step leaves parameters and moments untouched.
    pub fn step<'a, T: Scalar>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Param<T>>,
    ) -> Result<()> {
        let mut params: Vec<&mut Param<T>> = params.into_iter().collect();
        if let Some(bad) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFiniteGradient(bad.name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let (bc1, bc2) = (T::from_f64(bc1), T::from_f64(bc2));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for p in params.iter_mut() {
            let Param {
                value,
                grad,
                moment1,
                moment2,
                ..
            } = &mut **p;
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(moment1.data_mut())
                .zip(moment2.data_mut())
            {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(Self::DEFAULT_LR)
    }
}
