//! Dense helpers for the small systems this crate solves: straight-line fits
//! and symmetric positive-definite solves of normal equations.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `y ≈ intercept + slope * x` by least squares.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit<T> {
    pub intercept: T,
    pub slope: T,
    /// Root-mean-square residual (weighted when weights were given).
    pub rms: T,
    /// Standard error of the slope from the residual scatter; zero with only
    /// two points.
    pub slope_se: T,
}

pub fn line_fit<T: Real>(x: &[T], y: &[T]) -> Result<LineFit<T>> {
    weighted_line_fit(x, y, &vec![T::one(); x.len()])
}

/// Weighted least squares; weights are relative inverse variances.
pub fn weighted_line_fit<T: Real>(x: &[T], y: &[T], w: &[T]) -> Result<LineFit<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: w.len() });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("line fit needs 2 points, got {}", x.len())));
    }
    if w.iter().any(|wi| !(wi.is_finite() && *wi >= T::zero())) {
        return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
    }
    let sw = w.iter().copied().sum::<T>();
    if !(sw > T::zero()) {
        return Err(Error::InsufficientData("all weights are zero".into()));
    }
    let mx = x.iter().zip(w).map(|(&a, &b)| a * b).sum::<T>() / sw;
    let my = y.iter().zip(w).map(|(&a, &b)| a * b).sum::<T>() / sw;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        sxx += wi * (xi - mx) * (xi - mx);
        sxy += wi * (xi - mx) * (yi - my);
    }
    let spread = x.iter().zip(w).filter(|p| *p.1 > T::zero()).fold(T::zero(), |m, (&xi, _)| m.max((xi - mx).abs()));
    if sxx <= T::zero() || spread <= T::epsilon() * mx.abs() {
        return Err(Error::SingularFit { reason: "all abscissae identical".into(), columns: vec![0] });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: T = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let r = yi - intercept - slope * xi;
            wi * r * r
        })
        .sum();
    let n = x.len();
    let slope_se = if n > 2 {
        // effective sample size keeps the scale right for relative weights
        let n_eff = sw * sw / w.iter().map(|&wi| wi * wi).sum::<T>();
        let dof = (n_eff - T::lit(2.0)).max(T::one());
        (sse / sw * n_eff / dof / (sxx / sw * n_eff)).sqrt()
    } else {
        T::zero()
    };
    Ok(LineFit { intercept, slope, rms: (sse / sw).sqrt(), slope_se })
}

/// In-place Cholesky factorisation of a row-major `n×n` SPD matrix (lower
/// triangle). Returns the indices of pivots that fell below `tol` relative
/// to the largest diagonal entry; empty means success.
pub fn cholesky<T: Real>(a: &mut [T], n: usize, tol: T) -> Vec<usize> {
    let scale = (0..n).fold(T::zero(), |m, i| m.max(a[i * n + i].abs())).max(T::min_positive_value());
    let mut bad = Vec::new();
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > tol * scale) || !d.is_finite() {
            bad.push(j);
            // keep going so every offending column is reported
            a[j * n + j] = T::one();
            for i in (j + 1)..n {
                a[i * n + j] = T::zero();
            }
            continue;
        }
        let l = d.sqrt();
        a[j * n + j] = l;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }
    bad
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}
