use serde::{Deserialize, Serialize};

use super::{init_params, param_count, Arch, Network, TrainConfig, CLASSES};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `σ(W x + b)` with four outputs. Parameters are `W` row-major, then `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FcReadout<T> {
    inputs: usize,
    params: Vec<T>,
}

impl<T: Real> FcReadout<T> {
    pub fn init(inputs: usize, cfg: &TrainConfig) -> Self {
        Self { inputs, params: init_params(param_count(Arch::Fc { inputs }), cfg) }
    }

    pub fn from_params(inputs: usize, params: Vec<T>) -> Result<Self> {
        let want = param_count(Arch::Fc { inputs });
        if params.len() != want {
            return Err(Error::DimensionMismatch { expected: want, got: params.len() });
        }
        Ok(Self { inputs, params })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// Weight from input `j` to output `k`.
    pub fn w(&self, k: usize, j: usize) -> T {
        self.params[k * self.inputs + j]
    }

    pub fn b(&self, k: usize) -> T {
        self.params[CLASSES * self.inputs + k]
    }
}

impl<T: Real> Network<T> for FcReadout<T> {
    fn arch(&self) -> Arch {
        Arch::Fc { inputs: self.inputs }
    }

    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn logits(&self, x: &[T]) -> [T; CLASSES] {
        std::array::from_fn(|k| {
            let row = &self.params[k * self.inputs..(k + 1) * self.inputs];
            row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<T>() + self.b(k)
        })
    }

    fn backprop(&self, x: &[T], dz: &[T; CLASSES], grad: &mut [T]) {
        let n = self.inputs;
        for k in 0..CLASSES {
            for (g, &xi) in grad[k * n..(k + 1) * n].iter_mut().zip(x) {
                *g += dz[k] * xi;
            }
            grad[CLASSES * n + k] += dz[k];
        }
    }
}
