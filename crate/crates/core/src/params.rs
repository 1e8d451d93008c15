//! Flat, ordered registry of learnable tensors.

use crate::autodiff::{Gradients, Tape, Var};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// How a parameter is (re)initialised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal(0, 2 / (fan_in + fan_out)).
    XavierNormal { fan_in: usize, fan_out: usize },
    Constant(f64),
}

impl Init {
    /// Xavier init using the PyTorch fan convention for a `[out, in, kh, kw]`-like shape.
    pub fn xavier_for(shape: &[usize]) -> Self {
        let receptive: usize = shape.iter().skip(2).product();
        Init::XavierNormal { fan_in: shape[1] * receptive, fan_out: shape[0] * receptive }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub init: Init,
    /// Weight decay applies to this tensor.
    pub decay: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a tensor filled according to `init`'s constant, or zeros for Xavier
    /// entries until [`ParamStore::init`] runs.
    pub fn register(&mut self, name: impl Into<String>, shape: &[usize], init: Init, decay: bool) -> ParamId {
        let fill = match init {
            Init::Constant(c) => c,
            Init::XavierNormal { .. } => 0.0,
        };
        self.params.push(Param { name: name.into(), value: Tensor::full(shape, fill), init, decay });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of learnable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Push every parameter onto `tape` as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.params.iter().map(|p| tape.param(p.value.clone())).collect())
    }

    /// Push every parameter as a constant (no gradients).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound(self.params.iter().map(|p| tape.constant(p.value.clone())).collect())
    }

    /// Draw every Xavier entry from one seeded stream in registration order and
    /// reset constant entries.
    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.params {
            match p.init {
                Init::Constant(c) => p.value.data_mut().fill(c),
                Init::XavierNormal { fan_in, fan_out } => {
                    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                    let dist = Normal::new(0.0, std).expect("finite std");
                    for v in p.value.data_mut() {
                        *v = dist.sample(&mut rng);
                    }
                }
            }
        }
    }

    /// Gradients for every parameter in registration order.
    pub fn collect_grads(&self, bound: &Bound, grads: &Gradients) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(&bound.0)
            .map(|(p, &v)| grads.get_or_zeros(v, p.value.shape()))
            .collect()
    }
}

/// Tape handles for every parameter of a [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(pub Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}
