use super::params::{Gradients, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p -= lr * wd * p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with decoupled weight decay. Moments mirror parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Missing gradients count as zero. Fails without
    /// touching any parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, store has {}, gradients cover {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (id, name, p) in params.iter() {
            if grads.get(id).is_some_and(|g| g.shape() != p.shape()) {
                return Err(Error::Shape(format!("gradient for `{name}` has the wrong shape")));
            }
        }
        if let Some(id) = grads.first_non_finite() {
            return Err(Error::NonFinite {
                param: params.name(id).to_string(),
            });
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one, lr, eps) = (T::one(), T::from_f64_lossy(c.lr), T::from_f64_lossy(c.eps));
        let decay = T::from_f64_lossy(1.0 - c.lr * c.weight_decay);
        let (bc1, bc2) = (T::from_f64_lossy(bc1), T::from_f64_lossy(bc2));
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let k = id.index();
            let p = params.get_mut(id);
            let g = grads.get(id);
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (j, pv) in p.data_mut().iter_mut().enumerate() {
                let gv = g.map_or(T::zero(), |g| g.data()[j]);
                m[j] = b1 * m[j] + (one - b1) * gv;
                v[j] = b2 * v[j] + (one - b2) * gv * gv;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *pv = *pv * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
