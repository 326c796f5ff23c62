use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named learnable tensors of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Shape and name of one parameter, as recorded in checkpoint sidecars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: [usize; 4],
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| ParamSpec { name: n.clone(), shape: t.shape() })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
        }
    }

    /// Concatenated little-endian `f32` values of every tensor, in order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.count() * 4);
        for t in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    /// Rebuilds a parameter set from [`ParamSet::to_le_bytes`] output.
    pub fn from_le_bytes(specs: &[ParamSpec], bytes: &[u8]) -> Option<Self> {
        let total: usize = specs.iter().map(|s| s.shape.iter().product::<usize>()).sum();
        if bytes.len() != total * 4 {
            return None;
        }
        let mut floats = bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64));
        let mut set = Self::new();
        for s in specs {
            let n = s.shape.iter().product();
            set.add(s.name.clone(), Tensor::from_vec(s.shape, floats.by_ref().take(n).collect()));
        }
        Some(set)
    }
}

/// He-normal initialized convolution weight `(out, in, k, k)`.
pub fn he_conv<T: Scalar>(rng: &mut CounterRng, out: usize, inp: usize, k: usize) -> Tensor<T> {
    let fan_in = (inp * k * k) as f64;
    let std = (2.0 / fan_in).sqrt();
    let data = (0..out * inp * k * k).map(|_| T::lit(rng.normal() * std)).collect();
    Tensor::from_vec([out, inp, k, k], data)
}

/// He-normal initialized dense weight `(out, in, 1, 1)`.
pub fn he_dense<T: Scalar>(rng: &mut CounterRng, out: usize, inp: usize) -> Tensor<T> {
    let std = (2.0 / inp as f64).sqrt();
    let data = (0..out * inp).map(|_| T::lit(rng.normal() * std)).collect();
    Tensor::from_vec([out, inp, 1, 1], data)
}
