use rand::Rng;

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which part of a model a parameter belongs to. BGRL target networks copy
/// only the encoder and processor groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Processor,
    Decoder,
    Projector,
}

impl ParamGroup {
    pub fn in_target(self) -> bool {
        matches!(self, ParamGroup::Encoder | ParamGroup::Processor)
    }
}

/// Named trainable tensors in creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    groups: Vec<ParamGroup>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { names: Vec::new(), groups: Vec::new(), values: Vec::new() }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.groups.push(group);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Glorot-uniform weight matrix.
    pub fn add_weight<R: Rng + ?Sized>(&mut self, name: String, group: ParamGroup, fan_in: usize, fan_out: usize, rng: &mut R) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
        self.add(name, group, Tensor::from_vec(fan_in, fan_out, data).expect("sized"))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn group(&self, id: ParamId) -> ParamGroup {
        self.groups[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Records every parameter on the tape as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound { vars: self.values.iter().map(|v| Some(tape.param(v.clone()))).collect() }
    }

    /// Records every parameter as a constant (no gradients).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound {
        Bound { vars: self.values.iter().map(|v| Some(tape.constant(v.clone()))).collect() }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), groups: self.groups.clone(), values: self.values.iter().map(|v| v.cast()).collect() }
    }

    /// Replaces values from another store with identical names and shapes.
    pub fn load_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let j = other.find(name).ok_or_else(|| Error::input(format!("parameter '{name}' missing")))?;
            let v = other.get(j);
            if v.shape() != self.values[i].shape() {
                return Err(Error::shape("load parameters", format!("'{name}' is {:?}, expected {:?}", v.shape(), self.values[i].shape())));
            }
            self.values[i] = v.clone();
        }
        Ok(())
    }
}

/// Tape handles for a store's parameters, indexed by [`ParamId`]. Entries
/// are absent when only part of a model was bound.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Option<Var>>,
}

impl Bound {
    pub fn from_parts(vars: Vec<Option<Var>>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0].unwrap_or_else(|| panic!("parameter {} was not bound on this tape", id.0))
    }

    pub fn try_var(&self, id: ParamId) -> Option<Var> {
        self.vars.get(id.0).copied().flatten()
    }

    pub fn vars(&self) -> &[Option<Var>] {
        &self.vars
    }
}
