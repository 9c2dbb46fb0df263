use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors in a fixed manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.with_grad());
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Records every parameter on `tape`, as differentiable leaves when
    /// `with_grad` is set.
    pub fn bind(&self, tape: &mut Tape, with_grad: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| {
                if with_grad {
                    tape.leaf(t)
                } else {
                    tape.constant(t.shape().to_vec(), t.data().to_vec()).expect("consistent")
                }
            })
            .collect()
    }

    /// Adds the gradients held on `tape` for `vars` into each tensor's
    /// accumulator. Parameters off the loss path receive nothing.
    pub fn accumulate_grads(&mut self, tape: &Tape, vars: &[Var]) {
        for (t, &v) in self.tensors.iter_mut().zip(vars) {
            if let Some(g) = tape.grad(v) {
                t.accumulate_grad(g).expect("gradient matches parameter shape");
            }
        }
    }

    /// Concatenated parameter values in manifest order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Overwrites values from a flat buffer produced by [`Self::flatten`].
    pub fn load_flat(&mut self, flat: &[f64]) -> bool {
        if flat.len() != self.num_scalars() {
            return false;
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        true
    }
}

/// Allocates parameters in construction order from one seeded stream.
pub(crate) struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.store.push(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }

    pub fn constant(&mut self, name: String, shape: &[usize], value: f64) -> ParamId {
        let n: usize = shape.iter().product();
        self.store.push(name, Tensor::new(shape.to_vec(), vec![value; n]).expect("shape"))
    }

    pub fn normal(&mut self, name: String, shape: &[usize]) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| StandardNormal.sample(&mut *self.rng)).collect();
        self.store.push(name, Tensor::new(shape.to_vec(), data).expect("shape"))
    }
}
