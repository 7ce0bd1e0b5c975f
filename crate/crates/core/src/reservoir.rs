//! Device banks driven by a shared waveform, sampled as virtual nodes.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceParams, MemristorState, Method, NoiseSource, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::tasks::neural::{render_neural_waveform, ApShape, NeuralPattern, PATTERN_DURATION};
use crate::tasks::sonds::{EncodingParams, SondsDataset};
use crate::tasks::waveform::VoltageWaveform;

/// Default number of leading SONDS rows discarded.
pub const DEFAULT_WASHOUT: usize = 50;

/// Parallel, uncoupled devices sharing one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReservoirConfig<T> {
    pub devices: Vec<DeviceParams<T>>,
    /// Added to the shared waveform per device; empty means all zero.
    #[serde(default)]
    pub per_device_offset: Vec<T>,
    #[serde(default)]
    pub method: Method,
    /// Largest integration step.
    pub dt: T,
    #[serde(default)]
    pub noise: NoiseSpec<T>,
}

impl<T: Real> ReservoirConfig<T> {
    /// Noiseless RK4 bank at 0.1 ms steps.
    pub fn new(devices: Vec<DeviceParams<T>>) -> Self {
        Self { devices, per_device_offset: Vec::new(), method: Method::Rk4, dt: T::lit(1e-4), noise: NoiseSpec::noiseless() }
    }

    pub fn with_offsets(mut self, offsets: Vec<T>) -> Self {
        self.per_device_offset = offsets;
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec<T>) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(invalid("reservoir needs at least one device"));
        }
        for d in &self.devices {
            d.validate()?;
        }
        if !self.per_device_offset.is_empty() && self.per_device_offset.len() != self.devices.len() {
            return Err(invalid(format!(
                "{} offsets given for {} devices",
                self.per_device_offset.len(),
                self.devices.len()
            )));
        }
        if self.per_device_offset.iter().any(|o| !o.is_finite()) {
            return Err(invalid("device offsets must be finite"));
        }
        if !(self.dt.is_finite() && self.dt > T::zero()) {
            return Err(invalid(format!("integration dt must be > 0, got {}", self.dt)));
        }
        self.noise.validate()
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn offset(&self, i: usize) -> T {
        self.per_device_offset.get(i).copied().unwrap_or_else(T::zero)
    }

    pub fn labels(&self) -> Vec<String> {
        self.devices.iter().map(|d| d.label.clone()).collect()
    }

    fn substeps(&self, sample_dt: T) -> usize {
        (sample_dt / self.dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1)
    }
}

/// How feature columns were transformed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    #[default]
    None,
    /// Per-column standardization.
    ZScore,
    /// Each device's columns divided by that device's largest training value.
    DeviceMax,
    /// Natural log, then per-column standardization. Suited to conductances
    /// spanning many decades.
    LogZScore,
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "z-score" | "zscore" => Ok(Self::ZScore),
            "device-max" => Ok(Self::DeviceMax),
            "log-z-score" | "log-zscore" => Ok(Self::LogZScore),
            _ => Err(invalid(format!("unknown normalization `{s}` (none, z-score, device-max, log-z-score)"))),
        }
    }
}

/// Row-major features; columns are device-major, then node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StateMatrix<T> {
    pub rows: usize,
    pub devices: usize,
    pub nodes: usize,
    pub values: Vec<T>,
    pub normalized: NormMode,
    pub labels: Vec<String>,
}

impl<T: Real> StateMatrix<T> {
    pub fn new(rows: usize, devices: usize, nodes: usize, values: Vec<T>, labels: Vec<String>) -> Result<Self> {
        if values.len() != rows * devices * nodes {
            return Err(Error::DimensionMismatch { expected: rows * devices * nodes, got: values.len() });
        }
        if labels.len() != devices {
            return Err(Error::DimensionMismatch { expected: devices, got: labels.len() });
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Degenerate(format!("state value {k} is not finite")));
        }
        Ok(Self { rows, devices, nodes, values, normalized: NormMode::None, labels })
    }

    pub fn cols(&self) -> usize {
        self.devices * self.nodes
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols() + c]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks(self.cols().max(1))
    }

    /// Appends `other`'s rows; layouts must agree.
    pub fn vstack(&mut self, other: &Self) -> Result<()> {
        if other.devices != self.devices || other.nodes != self.nodes {
            return Err(Error::DimensionMismatch { expected: self.cols(), got: other.cols() });
        }
        self.values.extend_from_slice(&other.values);
        self.rows += other.rows;
        Ok(())
    }

    /// Keeps rows `from..`.
    pub fn drop_rows(&mut self, from: usize) {
        let from = from.min(self.rows);
        self.values.drain(..from * self.cols());
        self.rows -= from;
    }

    /// `dev<label>_n<j>`; repeated labels get a `#<index>` suffix.
    pub fn column_names(&self) -> Vec<String> {
        let dup = |i: usize| self.labels.iter().filter(|l| **l == self.labels[i]).count() > 1;
        let mut names = Vec::with_capacity(self.cols());
        for d in 0..self.devices {
            let label = if dup(d) { format!("{}#{d}", self.labels[d]) } else { self.labels[d].clone() };
            for j in 0..self.nodes {
                names.push(format!("dev{label}_n{j}"));
            }
        }
        names
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.column_names().join(","))?;
        for row in self.rows_iter().take(self.rows) {
            let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// `(pattern, device, node)`-indexed nested arrays.
    pub fn to_tensor(&self) -> FeatureTensor<T> {
        let data = self
            .rows_iter()
            .take(self.rows)
            .map(|row| row.chunks(self.nodes).map(|c| c.to_vec()).collect())
            .collect();
        FeatureTensor {
            shape: [self.rows, self.devices, self.nodes],
            devices: self.labels.clone(),
            normalized: self.normalized,
            data,
        }
    }
}

/// JSON form of per-pattern feature blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FeatureTensor<T> {
    pub shape: [usize; 3],
    pub devices: Vec<String>,
    pub normalized: NormMode,
    pub data: Vec<Vec<Vec<T>>>,
}

/// Integrates one device through `levels`, recording conductance after the
/// samples flagged in `take` (ascending indices).
#[allow(clippy::too_many_arguments)]
fn sample_device<T: Real>(
    params: &DeviceParams<T>,
    start: MemristorState<T>,
    levels: &[T],
    sample_dt: T,
    substeps: usize,
    method: Method,
    take: &[usize],
    noise: &mut NoiseSource<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(take.len());
    let mut next = 0;
    params.integrate_levels(start, levels, sample_dt, substeps, method, |k, s| {
        if next < take.len() && take[next] == k {
            out.push(read_conductance(params, s, levels[k], noise));
            next += 1;
        }
    })?;
    Ok(out)
}

/// Noiseless conductance, or current noise referred to conductance through
/// the instantaneous voltage. A reading at exactly 0 V carries no noise.
fn read_conductance<T: Real>(params: &DeviceParams<T>, s: &MemristorState<T>, v: T, noise: &mut NoiseSource<T>) -> T {
    let g = params.conductance(s);
    if noise.is_silent() || v == T::zero() {
        g
    } else {
        g + noise.sample() / v
    }
}

/// Drives every device (offset-shifted) through `waveform` from equilibrium at
/// its offset voltage and samples conductance at `sample_times`. A sample
/// time `t` reads the state at the end of the waveform sample ending at `t`.
/// Returns one row with `m × sample_times.len()` columns.
pub fn drive<T: Real>(
    config: &ReservoirConfig<T>,
    waveform: &VoltageWaveform<T>,
    sample_times: &[T],
) -> Result<StateMatrix<T>> {
    config.validate()?;
    waveform.validate()?;
    let take = sample_indices(waveform, sample_times)?;
    let substeps = config.substeps(waveform.dt);
    let blocks: Vec<Result<Vec<T>>> = (0..config.len())
        .into_par_iter()
        .map(|i| {
            let p = &config.devices[i];
            let off = config.offset(i);
            let levels: Vec<T> = waveform.v.iter().map(|&v| v + off).collect();
            let mut noise = config.noise.source(i as u64);
            sample_device(p, p.rest_state(off), &levels, waveform.dt, substeps, config.method, &take, &mut noise)
        })
        .collect();
    let mut values = Vec::with_capacity(config.len() * take.len());
    for b in blocks {
        values.extend(b?);
    }
    StateMatrix::new(1, config.len(), take.len(), values, config.labels())
}

fn sample_indices<T: Real>(wf: &VoltageWaveform<T>, times: &[T]) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(invalid("need at least one sample time"));
    }
    let mut out = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        let end = (t / wf.dt).round();
        if !(t.is_finite() && end >= T::one() && end <= T::from_usize_lossy(wf.len())) {
            return Err(invalid(format!("sample time {t} s outside the {} s waveform", wf.duration())));
        }
        let k = end.to_usize().expect("bounded above") - 1;
        if out.last().is_some_and(|&prev| k <= prev) {
            return Err(invalid(format!("sample times must strictly increase (index {j})")));
        }
        out.push(k);
    }
    Ok(out)
}

/// Drives the bank with the hold-encoded sequence, reads each device at the
/// end of every hold, and drops the first `washout` rows. State carries over
/// from hold to hold; devices start at equilibrium at their offset.
pub fn run_sonds<T: Real>(
    config: &ReservoirConfig<T>,
    dataset: &SondsDataset<T>,
    enc: &EncodingParams<T>,
    washout: usize,
) -> Result<(StateMatrix<T>, Vec<T>)> {
    config.validate()?;
    enc.validate()?;
    let n = dataset.len();
    if washout >= n {
        return Err(invalid(format!("washout {washout} leaves no rows out of {n}")));
    }
    let levels = enc.levels(&dataset.u);
    let substeps = config.substeps(enc.dt_hold);
    let take: Vec<usize> = (0..n).collect();
    let cols: Vec<Result<Vec<T>>> = (0..config.len())
        .into_par_iter()
        .map(|i| {
            let p = &config.devices[i];
            let off = config.offset(i);
            let shifted: Vec<T> = levels.iter().map(|&v| v + off).collect();
            let mut noise = config.noise.source(i as u64);
            sample_device(p, p.rest_state(off), &shifted, enc.dt_hold, substeps, config.method, &take, &mut noise)
        })
        .collect();
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    let m = config.len();
    let mut values = Vec::with_capacity((n - washout) * m);
    for k in washout..n {
        values.extend(cols.iter().map(|c| c[k]));
    }
    let states = StateMatrix::new(n - washout, m, 1, values, config.labels())?;
    Ok((states, dataset.y[washout..].to_vec()))
}

/// Neural-pattern rendering and node sampling settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NeuralDrive<T> {
    pub scale: T,
    pub nodes: usize,
    pub sample_rate: T,
    #[serde(default)]
    pub ap: ApShape,
}

impl<T: Real> Default for NeuralDrive<T> {
    /// 1.8× scaling, 20 nodes, 10 kHz.
    fn default() -> Self {
        Self { scale: T::lit(1.8), nodes: 20, sample_rate: T::lit(1e4), ap: ApShape::default() }
    }
}

/// Node `j` of `n` sits at `(j+1)·0.62/n` seconds.
pub fn node_times<T: Real>(n: usize) -> Vec<T> {
    (0..n).map(|j| T::lit(PATTERN_DURATION * (j + 1) as f64 / n as f64)).collect()
}

/// One `(m, n)` block per pattern, flattened device-major into a row.
///
/// Each pattern is rendered once at zero offset and shifted per device by the
/// configured offsets. Before every pattern each device is reset to
/// equilibrium at its resting input level, `scale·rest + offset`.
pub fn run_neural<T: Real>(
    config: &ReservoirConfig<T>,
    patterns: &[NeuralPattern<T>],
    drive: &NeuralDrive<T>,
) -> Result<StateMatrix<T>> {
    config.validate()?;
    if drive.nodes == 0 {
        return Err(invalid("nodes per pattern must be >= 1"));
    }
    let times = node_times::<T>(drive.nodes);
    let m = config.len();
    let rest_level = drive.scale * T::lit(drive.ap.rest);
    let rows: Vec<Result<Vec<T>>> = patterns
        .par_iter()
        .enumerate()
        .map(|(idx, pat)| {
            let wf = render_neural_waveform(pat, drive.scale, T::zero(), drive.sample_rate, &drive.ap)?;
            let take = sample_indices(&wf, &times)?;
            let substeps = config.substeps(wf.dt);
            let mut row = Vec::with_capacity(m * drive.nodes);
            for (i, p) in config.devices.iter().enumerate() {
                let off = config.offset(i);
                let levels: Vec<T> = wf.v.iter().map(|&v| v + off).collect();
                let mut noise = config.noise.source((idx * m + i) as u64);
                let start = p.rest_state(rest_level + off);
                row.extend(sample_device(p, start, &levels, wf.dt, substeps, config.method, &take, &mut noise)?);
            }
            Ok(row)
        })
        .collect();
    let mut values = Vec::with_capacity(patterns.len() * m * drive.nodes);
    for r in rows {
        values.extend(r?);
    }
    StateMatrix::new(patterns.len(), m, drive.nodes, values, config.labels())
}

/// Column transform fitted on training features and reused on test features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Normalizer<T> {
    pub mode: NormMode,
    pub shift: Vec<T>,
    pub scale: Vec<T>,
    /// Columns with zero spread, left centred but unscaled.
    pub flat_columns: Vec<usize>,
}

fn log_floor<T: Real>(x: T) -> T {
    x.max(T::min_positive_value()).ln()
}

impl<T: Real> Normalizer<T> {
    pub fn fit(m: &StateMatrix<T>, mode: NormMode) -> Result<Self> {
        let cols = m.cols();
        let mut shift = vec![T::zero(); cols];
        let mut scale = vec![T::one(); cols];
        let mut flat_columns = Vec::new();
        match mode {
            NormMode::None => {}
            NormMode::ZScore | NormMode::LogZScore => {
                if m.rows < 2 {
                    return Err(Error::InsufficientData("z-score needs at least two rows".into()));
                }
                let n = T::from_usize_lossy(m.rows);
                for c in 0..cols {
                    let col: Vec<T> = m.column(c);
                    let col: Vec<T> = if mode == NormMode::LogZScore { col.into_iter().map(log_floor).collect() } else { col };
                    let mean = col.iter().copied().sum::<T>() / n;
                    let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
                    shift[c] = mean;
                    let sd = var.sqrt();
                    if sd > T::epsilon() * mean.abs().max(T::min_positive_value()) {
                        scale[c] = sd;
                    } else {
                        flat_columns.push(c);
                    }
                }
            }
            NormMode::DeviceMax => {
                for d in 0..m.devices {
                    let cs = d * m.nodes..(d + 1) * m.nodes;
                    let max = (0..m.rows)
                        .flat_map(|r| cs.clone().map(move |c| (r, c)))
                        .fold(T::zero(), |acc, (r, c)| acc.max(m.get(r, c).abs()));
                    for c in cs {
                        if max > T::zero() {
                            scale[c] = max;
                        } else {
                            flat_columns.push(c);
                        }
                    }
                }
            }
        }
        Ok(Self { mode, shift, scale, flat_columns })
    }

    pub fn apply(&self, m: &StateMatrix<T>) -> Result<StateMatrix<T>> {
        if m.cols() != self.shift.len() {
            return Err(Error::DimensionMismatch { expected: self.shift.len(), got: m.cols() });
        }
        if m.normalized != NormMode::None {
            return Err(invalid("features are already normalized"));
        }
        let cols = m.cols();
        let values = m
            .values
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let c = k % cols;
                let x = if self.mode == NormMode::LogZScore { log_floor(x) } else { x };
                (x - self.shift[c]) / self.scale[c]
            })
            .collect();
        Ok(StateMatrix { values, normalized: self.mode, ..m.clone() })
    }
}
