use serde::{Deserialize, Serialize};

use super::{init_params, param_count, Arch, Network, TrainConfig, CLASSES};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One `(rows, kernel)` filter slid along the node axis of a `(rows, cols)`
/// block (no padding), feeding `σ(W h + b)` directly.
///
/// Parameters: kernel row-major, kernel bias, `W` row-major, `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConvFcReadout<T> {
    rows: usize,
    cols: usize,
    kernel: usize,
    params: Vec<T>,
}

impl<T: Real> ConvFcReadout<T> {
    pub fn init(rows: usize, cols: usize, kernel: usize, cfg: &TrainConfig) -> Result<Self> {
        let arch = Arch::ConvFc { rows, cols, kernel };
        arch.validate()?;
        Ok(Self { rows, cols, kernel, params: init_params(param_count(arch), cfg) })
    }

    pub fn from_params(rows: usize, cols: usize, kernel: usize, params: Vec<T>) -> Result<Self> {
        let arch = Arch::ConvFc { rows, cols, kernel };
        arch.validate()?;
        if params.len() != param_count(arch) {
            return Err(Error::DimensionMismatch { expected: param_count(arch), got: params.len() });
        }
        Ok(Self { rows, cols, kernel, params })
    }

    /// Length of the convolution output.
    pub fn conv_len(&self) -> usize {
        self.cols - self.kernel + 1
    }

    fn kernel_len(&self) -> usize {
        self.rows * self.kernel
    }

    fn w_offset(&self) -> usize {
        self.kernel_len() + 1
    }

    fn b_offset(&self) -> usize {
        self.w_offset() + CLASSES * self.conv_len()
    }

    /// Convolution output for one `(rows, cols)` block stored row-major.
    pub fn conv(&self, x: &[T]) -> Vec<T> {
        let k = &self.params[..self.kernel_len()];
        let bias = self.params[self.kernel_len()];
        (0..self.conv_len())
            .map(|t| {
                let mut acc = bias;
                for i in 0..self.rows {
                    let xr = &x[i * self.cols + t..i * self.cols + t + self.kernel];
                    let kr = &k[i * self.kernel..(i + 1) * self.kernel];
                    acc += kr.iter().zip(xr).map(|(&a, &b)| a * b).sum::<T>();
                }
                acc
            })
            .collect()
    }
}

impl<T: Real> Network<T> for ConvFcReadout<T> {
    fn arch(&self) -> Arch {
        Arch::ConvFc { rows: self.rows, cols: self.cols, kernel: self.kernel }
    }

    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn logits(&self, x: &[T]) -> [T; CLASSES] {
        let h = self.conv(x);
        let (wo, bo, l) = (self.w_offset(), self.b_offset(), self.conv_len());
        std::array::from_fn(|c| {
            let w = &self.params[wo + c * l..wo + (c + 1) * l];
            w.iter().zip(&h).map(|(&a, &b)| a * b).sum::<T>() + self.params[bo + c]
        })
    }

    fn backprop(&self, x: &[T], dz: &[T; CLASSES], grad: &mut [T]) {
        let h = self.conv(x);
        let (wo, bo, l) = (self.w_offset(), self.b_offset(), self.conv_len());
        let mut dh = vec![T::zero(); l];
        for c in 0..CLASSES {
            let w = &self.params[wo + c * l..wo + (c + 1) * l];
            for t in 0..l {
                grad[wo + c * l + t] += dz[c] * h[t];
                dh[t] += dz[c] * w[t];
            }
            grad[bo + c] += dz[c];
        }
        for (t, &d) in dh.iter().enumerate() {
            for i in 0..self.rows {
                for j in 0..self.kernel {
                    grad[i * self.kernel + j] += d * x[i * self.cols + t + j];
                }
            }
            grad[self.kernel_len()] += d;
        }
    }
}
