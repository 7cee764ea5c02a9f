use rand::Rng;

use super::params::{Bound, ParamGroup, ParamId, ParamStore};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::Result;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Number of linear layers, hidden width, and output width of an MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSpec {
    pub layers: usize,
    pub hidden: usize,
    pub out: usize,
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

/// Linear layers with activation then layer normalisation after every
/// hidden layer; the output layer is linear.
#[derive(Debug, Clone)]
pub struct Mlp {
    dense: Vec<Dense>,
    norms: Vec<(ParamId, ParamId)>,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Mlp {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        group: ParamGroup,
        in_dim: usize,
        spec: MlpSpec,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let layers = spec.layers.max(1);
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(spec.hidden, layers - 1));
        dims.push(spec.out);
        let mut dense = Vec::new();
        let mut norms = Vec::new();
        for l in 0..layers {
            let (fi, fo) = (dims[l], dims[l + 1]);
            let w = store.add_weight(format!("{name}.l{l}.w"), group, fi, fo, rng);
            let b = store.add(format!("{name}.l{l}.b"), group, Tensor::zeros(1, fo));
            dense.push(Dense { w, b });
            if l + 1 < layers {
                let g = store.add(format!("{name}.ln{l}.gain"), group, Tensor::filled(1, fo, T::one()));
                let b = store.add(format!("{name}.ln{l}.bias"), group, Tensor::zeros(1, fo));
                norms.push((g, b));
            }
        }
        Mlp { dense, norms, activation, in_dim, out_dim: spec.out }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (l, d) in self.dense.iter().enumerate() {
            h = tape.matmul(h, bound.var(d.w))?;
            h = tape.add_row(h, bound.var(d.b))?;
            if let Some(&(g, b)) = self.norms.get(l) {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
                h = tape.layer_norm(h, bound.var(g), bound.var(b), T::lit(LAYER_NORM_EPS))?;
            }
        }
        Ok(h)
    }
}
