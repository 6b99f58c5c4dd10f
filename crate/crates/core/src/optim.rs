//! Adam with bias correction and no weight decay.

use seanet_tensor::{Element, Gradients};

use crate::error::{Error, Result};
use crate::nn::Param;

pub struct Adam<T: Element> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Element> Adam<T> {
    /// State for `params`, which must be passed in the same order to every [`Adam::step`].
    pub fn new(params: &[(String, &Param<T>)]) -> Self {
        let moments = params.iter().map(|(_, p)| (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()])).collect();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, moments }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update at learning rate `lr`. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &[(String, &Param<T>)], grads: &Gradients<T>, lr: f64) -> Result<()> {
        if params.len() != self.moments.len() {
            return Err(Error::Config(format!("optimizer tracks {} parameters, got {}", self.moments.len(), params.len())));
        }
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - T::of(self.beta1.powi(self.step));
        let c2 = T::one() - T::of(self.beta2.powi(self.step));
        let (lr, eps) = (T::of(lr), T::of(self.eps));
        for ((_, p), (m, v)) in params.iter().zip(self.moments.iter_mut()) {
            let Some(g) = grads.get(&p.tensor()) else { continue };
            let mut data = p.to_vec();
            for i in 0..data.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.set(data)?;
        }
        Ok(())
    }
}
