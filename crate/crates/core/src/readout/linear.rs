use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::reservoir::StateMatrix;
use crate::scalar::Real;

/// `y = w·x + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LinearReadout<T> {
    pub weights: Vec<T>,
    pub intercept: T,
    /// Ridge added to the standardized normal equations; zero when the plain
    /// solve succeeded.
    #[serde(default)]
    pub ridge: T,
}

impl<T: Real> LinearReadout<T> {
    pub fn param_count(&self) -> usize {
        self.weights.len() + 1
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        self.weights.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<T>() + self.intercept
    }

    /// Flat parameters, weights then intercept.
    pub fn params(&self) -> Vec<T> {
        let mut p = self.weights.clone();
        p.push(self.intercept);
        p
    }
}

/// Ridge used when the plain normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-10;

/// Least squares with intercept. Columns are centred and scaled to unit
/// variance before forming the normal equations; a constant column gets zero
/// weight. If the Cholesky factorisation finds a (near-)zero pivot the solve
/// is repeated with a small ridge, and only if that also fails is the fit
/// reported as singular.
pub fn train_linear<T: Real>(states: &StateMatrix<T>, targets: &[T]) -> Result<LinearReadout<T>> {
    let (n, p) = (states.rows, states.cols());
    if targets.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: targets.len() });
    }
    if n < p + 1 {
        return Err(Error::InsufficientData(format!("{n} rows cannot determine {} parameters", p + 1)));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput("targets must be finite".into()));
    }
    let nf = T::from_usize_lossy(n);
    let mut mean = vec![T::zero(); p];
    let mut sd = vec![T::zero(); p];
    for c in 0..p {
        let col = states.column(c);
        mean[c] = col.iter().copied().sum::<T>() / nf;
        sd[c] = (col.iter().map(|&x| (x - mean[c]) * (x - mean[c])).sum::<T>() / nf).sqrt();
    }
    let y_mean = targets.iter().copied().sum::<T>() / nf;
    let z = |r: usize, c: usize| {
        if sd[c] > T::zero() {
            (states.get(r, c) - mean[c]) / sd[c]
        } else {
            T::zero()
        }
    };
    let mut a = vec![T::zero(); p * p];
    let mut b = vec![T::zero(); p];
    for (r, &y) in targets.iter().enumerate() {
        let zr: Vec<T> = (0..p).map(|c| z(r, c)).collect();
        let yr = y - y_mean;
        for i in 0..p {
            b[i] += zr[i] * yr;
            for j in 0..=i {
                a[i * p + j] += zr[i] * zr[j];
            }
        }
    }
    for i in 0..p {
        b[i] /= nf;
        for j in 0..=i {
            a[i * p + j] /= nf;
            a[j * p + i] = a[i * p + j];
        }
    }
    let tol = T::epsilon() * T::lit(64.0);
    let mut l = a.clone();
    let mut ridge = T::zero();
    let bad = cholesky(&mut l, p, tol);
    if !bad.is_empty() {
        ridge = T::lit(RIDGE_FALLBACK).max(T::epsilon() * T::lit(100.0));
        log::debug!("normal equations singular at columns {bad:?}; retrying with ridge {ridge}");
        l = a.clone();
        for i in 0..p {
            l[i * p + i] += ridge;
        }
        let still = cholesky(&mut l, p, ridge * T::lit(1e-2));
        if !still.is_empty() {
            return Err(Error::SingularFit {
                reason: "normal equations singular even with ridge fallback".into(),
                columns: still,
            });
        }
    }
    let beta = cholesky_solve(&l, p, &b);
    let weights: Vec<T> =
        (0..p).map(|c| if sd[c] > T::zero() { beta[c] / sd[c] } else { T::zero() }).collect();
    let intercept = y_mean - weights.iter().zip(&mean).map(|(&w, &m)| w * m).sum::<T>();
    if weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
        let cols = (0..p).filter(|&c| !weights[c].is_finite()).collect();
        return Err(Error::SingularFit { reason: "non-finite weights".into(), columns: cols });
    }
    Ok(LinearReadout { weights, intercept, ridge })
}

pub fn predict_linear<T: Real>(model: &LinearReadout<T>, states: &StateMatrix<T>) -> Result<Vec<T>> {
    if states.cols() != model.weights.len() {
        return Err(Error::DimensionMismatch { expected: model.weights.len(), got: states.cols() });
    }
    Ok(states.rows_iter().take(states.rows).map(|r| model.predict_row(r)).collect())
}
