use crate::autodiff::{Gradients, Real, Tensor};
use crate::error::{Error, Result};
use crate::processors::{Bound, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimFamily {
    Adam,
    /// Decoupled weight decay.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub family: OptimFamily,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    /// Global gradient-norm clip; off when `None`.
    pub clip_norm: Option<f64>,
}

impl OptimConfig {
    pub fn node_default() -> Self {
        OptimConfig { family: OptimFamily::AdamW, beta1: 0.9, beta2: 0.999, weight_decay: 1e-5, eps: 1e-8, clip_norm: None }
    }

    pub fn mol_default() -> Self {
        OptimConfig { family: OptimFamily::Adam, beta1: 0.9, beta2: 0.95, weight_decay: 0.0, eps: 1e-8, clip_norm: None }
    }
}

/// Gradient of every bound parameter, indexed like the store. Parameters
/// that received no gradient are `None`.
pub fn collect_grads<T: Real>(grads: &mut Gradients<T>, bound: &Bound) -> Vec<Option<Tensor<T>>> {
    bound.vars().iter().map(|v| v.and_then(|v| grads.take(v))).collect()
}

/// Adam / AdamW state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    cfg: OptimConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(cfg: OptimConfig, store: &ParamStore<T>) -> Self {
        let zeros = |t: &Tensor<T>| Tensor::zeros(t.rows(), t.cols());
        Optimizer { cfg, m: store.values().iter().map(zeros).collect(), v: store.values().iter().map(zeros).collect(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update at learning rate `lr`. Parameters without a gradient are
    /// left untouched, moments included. Any non-finite gradient aborts the
    /// step before anything changes.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>], lr: f64) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::shape("optimizer step", format!("{} gradients for {} parameters", grads.len(), store.len())));
        }
        for (id, g) in store.ids().zip(grads) {
            if let Some(g) = g {
                if g.shape() != store.get(id).shape() {
                    return Err(Error::shape("optimizer step", format!("gradient {:?} for '{}' {:?}", g.shape(), store.name(id), store.get(id).shape())));
                }
                if !g.all_finite() {
                    return Err(Error::NonFinite(format!("gradient of parameter '{}' is not finite", store.name(id))));
                }
            }
        }
        let clip = match self.cfg.clip_norm {
            Some(max) => {
                let norm = grads.iter().flatten().flat_map(|g| g.data()).map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        self.t += 1;
        let c = self.cfg;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (nb1, nb2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.t as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.t as i32));
        let lr_t = T::lit(lr);
        let eps = T::lit(c.eps);
        let decay = T::lit(1.0 - lr * c.weight_decay);
        let l2 = T::lit(c.weight_decay);
        let clip = T::lit(clip);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let Some(g) = &grads[k] else { continue };
            let p = store.get_mut(id).data_mut();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for i in 0..p.len() {
                let mut gi = g.data()[i] * clip;
                match c.family {
                    OptimFamily::AdamW => p[i] *= decay,
                    OptimFamily::Adam => gi += l2 * p[i],
                }
                m[i] = b1 * m[i] + nb1 * gi;
                v[i] = b2 * v[i] + nb2 * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
