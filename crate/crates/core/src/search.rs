//! End-to-end SONDS evaluation and the encoding-parameter grid search.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::{nmse_pair, NmsePair};
use crate::readout::{predict_linear, train_linear, LinearReadout};
use crate::reservoir::{run_sonds, ReservoirConfig};
use crate::scalar::{linspace, logspace, Real};
use crate::tasks::sonds::{EncodingParams, SondsDataset};

/// Everything a single SONDS run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SondsOutcome<T> {
    pub model: LinearReadout<T>,
    pub nmse_train: NmsePair<T>,
    pub nmse_test: NmsePair<T>,
    pub train_pred: Vec<T>,
    pub train_truth: Vec<T>,
    pub test_pred: Vec<T>,
    pub test_truth: Vec<T>,
}

/// Reservoir states for both splits, least-squares readout on the training
/// states, NMSE on both.
pub fn evaluate_sonds<T: Real>(
    config: &ReservoirConfig<T>,
    enc: &EncodingParams<T>,
    train: &SondsDataset<T>,
    test: &SondsDataset<T>,
    washout: usize,
) -> Result<SondsOutcome<T>> {
    let (x_train, y_train) = run_sonds(config, train, enc, washout)?;
    let (x_test, y_test) = run_sonds(config, test, enc, washout)?;
    let model = train_linear(&x_train, &y_train)?;
    let train_pred = predict_linear(&model, &x_train)?;
    let test_pred = predict_linear(&model, &x_test)?;
    Ok(SondsOutcome {
        nmse_train: nmse_pair(&train_pred, &y_train)?,
        nmse_test: nmse_pair(&test_pred, &y_test)?,
        model,
        train_pred,
        train_truth: y_train,
        test_pred,
        test_truth: y_test,
    })
}

/// Axes of the search, in volts and seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GridSpec<T> {
    pub gamma: Vec<T>,
    pub delta: Vec<T>,
    pub dt: Vec<T>,
}

impl<T: Real> Default for GridSpec<T> {
    fn default() -> Self {
        Self::with_points(20, 20, 20)
    }
}

impl<T: Real> GridSpec<T> {
    /// Linear gamma over 20–200 mV, linear delta over 0–150 mV, log-spaced
    /// hold over 0.5–20 ms.
    pub fn with_points(n_gamma: usize, n_delta: usize, n_dt: usize) -> Self {
        Self {
            gamma: linspace(T::lit(0.020), T::lit(0.200), n_gamma),
            delta: linspace(T::zero(), T::lit(0.150), n_delta),
            dt: logspace(T::lit(0.5e-3), T::lit(20e-3), n_dt),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() || self.delta.is_empty() || self.dt.is_empty() {
            return Err(invalid("every grid axis needs at least one point"));
        }
        if self.dt.iter().any(|d| !(*d > T::zero())) {
            return Err(invalid("hold times must be > 0"));
        }
        if self.gamma.iter().chain(&self.delta).any(|x| !x.is_finite()) {
            return Err(invalid("grid voltages must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gamma.len() * self.delta.len() * self.dt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in gamma-major, then delta, then hold order.
    pub fn cells(&self) -> Vec<(T, T, T)> {
        let mut out = Vec::with_capacity(self.len());
        for &g in &self.gamma {
            for &d in &self.delta {
                for &t in &self.dt {
                    out.push((g, d, t));
                }
            }
        }
        out
    }

    /// Sub-grid of the axis points within `radius` steps of the given cell.
    pub fn neighborhood(&self, cell: (T, T, T), radius: usize) -> Self {
        fn around<T: Real>(axis: &[T], x: T, r: usize) -> Vec<T> {
            let i = axis
                .iter()
                .enumerate()
                .min_by(|a, b| (*a.1 - x).abs().partial_cmp(&(*b.1 - x).abs()).expect("finite axis"))
                .map(|p| p.0)
                .unwrap_or(0);
            axis[i.saturating_sub(r)..(i + r + 1).min(axis.len())].to_vec()
        }
        Self {
            gamma: around(&self.gamma, cell.0, radius),
            delta: around(&self.delta, cell.1, radius),
            dt: around(&self.dt, cell.2, radius),
        }
    }
}

/// One evaluated grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CellResult<T> {
    pub gamma: T,
    pub delta: T,
    pub dt: T,
    pub nmse_train: Option<T>,
    pub nmse_test: Option<T>,
    /// Why the cell has no score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T: Real> CellResult<T> {
    pub fn encoding(&self, sample_rate: T) -> EncodingParams<T> {
        EncodingParams { gamma: self.gamma, delta: self.delta, dt_hold: self.dt, sample_rate }
    }
}

/// Evaluates every cell on the same train/test pair (energy NMSE) and
/// returns them sorted by test NMSE; failed cells go last. Ties and failures
/// keep grid order, so the output does not depend on scheduling.
pub fn grid_search<T: Real>(
    config: &ReservoirConfig<T>,
    grid: &GridSpec<T>,
    train: &SondsDataset<T>,
    test: &SondsDataset<T>,
    washout: usize,
    sample_rate: T,
) -> Result<Vec<CellResult<T>>> {
    config.validate()?;
    grid.validate()?;
    let mut results: Vec<(usize, CellResult<T>)> = grid
        .cells()
        .into_par_iter()
        .enumerate()
        .map(|(idx, (gamma, delta, dt))| {
            let enc = EncodingParams { gamma, delta, dt_hold: dt, sample_rate };
            let cell = match evaluate_sonds(config, &enc, train, test, washout) {
                Ok(o) => CellResult {
                    gamma,
                    delta,
                    dt,
                    nmse_train: Some(o.nmse_train.energy),
                    nmse_test: Some(o.nmse_test.energy),
                    error: None,
                },
                Err(e) => {
                    log::warn!("grid cell gamma={gamma} delta={delta} dt={dt} failed: {e}");
                    CellResult { gamma, delta, dt, nmse_train: None, nmse_test: None, error: Some(e.to_string()) }
                }
            };
            (idx, cell)
        })
        .collect();
    results.sort_by(|a, b| match (a.1.nmse_test, b.1.nmse_test) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });
    Ok(results.into_iter().map(|r| r.1).collect())
}

/// Fraction of scored cells with test NMSE strictly below `value`.
pub fn rank_fraction<T: Real>(results: &[CellResult<T>], value: T) -> f64 {
    let scored: Vec<T> = results.iter().filter_map(|r| r.nmse_test).collect();
    if scored.is_empty() {
        return 1.0;
    }
    scored.iter().filter(|&&x| x < value).count() as f64 / scored.len() as f64
}

/// Writes `gamma_V,delta_V,dt_s,nmse_train,nmse_test`; failed cells carry NaN.
pub fn write_grid_csv<T: Real, W: Write>(results: &[CellResult<T>], mut w: W) -> Result<()> {
    writeln!(w, "gamma_V,delta_V,dt_s,nmse_train,nmse_test")?;
    let f = |x: Option<T>| x.map_or_else(|| "NaN".to_string(), |v| v.to_string());
    for r in results {
        writeln!(w, "{},{},{},{},{}", r.gamma, r.delta, r.dt, f(r.nmse_train), f(r.nmse_test))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = GridSpec::<f64>::default();
        assert_eq!(g.len(), 8000);
        assert!((g.gamma[0] - 0.020).abs() < 1e-15 && (g.gamma[19] - 0.200).abs() < 1e-15);
        assert!((g.delta[19] - 0.150).abs() < 1e-15);
        assert!((g.dt[0] - 0.5e-3).abs() < 1e-15 && (g.dt[19] - 20e-3).abs() < 1e-15);
        assert_eq!(g.cells()[1], (g.gamma[0], g.delta[0], g.dt[1]));
    }

    #[test]
    fn neighborhood_clips_to_axes() {
        let g = GridSpec::<f64>::default();
        let n = g.neighborhood((g.gamma[0], g.delta[5], g.dt[19]), 1);
        assert_eq!(n.gamma.len(), 2);
        assert_eq!(n.delta.len(), 3);
        assert_eq!(n.dt.len(), 2);
        assert!(n.delta.contains(&g.delta[5]));
    }

    #[test]
    fn rank_fraction_counts_strictly_better() {
        let cell = |v: Option<f64>| CellResult { gamma: 0.0, delta: 0.0, dt: 1e-3, nmse_train: v, nmse_test: v, error: None };
        let rs = vec![cell(Some(1.0)), cell(Some(2.0)), cell(Some(3.0)), cell(None)];
        assert_eq!(rank_fraction(&rs, 2.0), 1.0 / 3.0);
        assert_eq!(rank_fraction(&rs, 0.5), 0.0);
        let mut buf = Vec::new();
        write_grid_csv(&rs, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("0,0,0.001,NaN,NaN\n"));
    }
}
