use crate::autodiff::Real;
use crate::error::Result;
use crate::objectives::ema_update;
use crate::processors::ParamStore;

/// Exponential moving average of all trainable parameters, used for
/// evaluation. Starts from the initial values.
#[derive(Debug, Clone)]
pub struct ParamEma<T> {
    decay: f64,
    shadow: ParamStore<T>,
}

impl<T: Real> ParamEma<T> {
    pub fn new(store: &ParamStore<T>, decay: f64) -> Self {
        ParamEma { decay, shadow: store.clone() }
    }

    pub fn update(&mut self, store: &ParamStore<T>) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            ema_update(self.shadow.get_mut(id), store.get(id), self.decay)?;
        }
        Ok(())
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.shadow
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.shadow
    }
}
