use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

/// First and second moment estimates for every entry of one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<_> = store.entries().iter().map(|e| Tensor::zeros_like(&e.value)).collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update to every trainable entry.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(TensorError::shape(
                "adam_step",
                format!(
                    "{} gradients / {} moment slots for {} parameters",
                    grads.len(),
                    self.m.len(),
                    store.len()
                ),
            ));
        }
        for (entry, g) in store.entries().iter().zip(grads) {
            if entry.value.shape() != g.shape() {
                return Err(TensorError::shape(
                    "adam_step",
                    format!(
                        "{}: parameter {:?} vs gradient {:?}",
                        entry.name,
                        entry.value.shape(),
                        g.shape()
                    ),
                ));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (entry, g)) in store.entries_mut().iter_mut().zip(grads).enumerate() {
            if !entry.trainable {
                continue;
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((p, &gi), mi), vi) in entry.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let gf = gi.as_f64();
                let mf = beta1 * mi.as_f64() + (1.0 - beta1) * gf;
                let vf = beta2 * vi.as_f64() + (1.0 - beta2) * gf * gf;
                *mi = T::from_f64_lossy(mf);
                *vi = T::from_f64_lossy(vf);
                let update = lr * (mf / c1) / ((vf / c2).sqrt() + eps);
                *p = T::from_f64_lossy(p.as_f64() - update);
            }
        }
        Ok(())
    }
}
