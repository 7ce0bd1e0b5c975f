//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar the simulator and readouts are written against.
///
/// Implemented for `f32` and `f64`. The crate-root type aliases pin `f64`,
/// which is what the benchmarks use; `f32` is useful for memory-bound sweeps
/// where 1e-4 relative accuracy is enough.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant. Every finite `f64` has an `f32` image
    /// (possibly rounded or infinite), so this never fails for the two
    /// implementors.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let step = (b - a) / T::from_usize_lossy(n - 1);
            (0..n).map(|i| a + step * T::from_usize_lossy(i)).collect()
        }
    }
}

/// `n` log-spaced values from `a` to `b` inclusive (`a`, `b` > 0).
pub fn logspace<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    linspace(a.ln(), b.ln(), n).into_iter().map(Float::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_endpoints() {
        let v = linspace(0.0_f64, 1.0, 5);
        assert_eq!(v, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let l = logspace(1.0_f64, 100.0, 3);
        assert!((l[1] - 10.0).abs() < 1e-12);
        assert_eq!(linspace(3.0_f32, 9.0, 1), vec![3.0]);
        assert!(linspace(0.0_f64, 1.0, 0).is_empty());
    }
}
