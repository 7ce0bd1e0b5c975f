//! Simulated device characterization (sweeps, hysteresis, paired pulses,
//! step decays) and the parameter-fitting routine that inverts it.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{DeviceParams, MemristorState, Method, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::linalg::{line_fit, weighted_line_fit};
use crate::scalar::Real;
use crate::tasks::waveform::{read_columns, VoltageWaveform};

/// Aligned time, voltage and current samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IvTrace<T> {
    pub t: Vec<T>,
    pub v: Vec<T>,
    pub i: Vec<T>,
}

impl<T: Real> IvTrace<T> {
    pub fn new(t: Vec<T>, v: Vec<T>, i: Vec<T>) -> Result<Self> {
        let tr = Self { t, v, i };
        tr.validate()?;
        Ok(tr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.len() != self.v.len() || self.t.len() != self.i.len() {
            return Err(invalid("trace columns differ in length"));
        }
        if self.t.len() < 2 {
            return Err(invalid("trace needs at least two samples"));
        }
        if let Some(k) = self.t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!("time not strictly increasing at sample {}", k + 1)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,v_V,i_A")?;
        for k in 0..self.t.len() {
            writeln!(w, "{},{},{}", self.t[k], self.v[k], self.i[k])?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = read_columns::<T, R>(r, &["t_s", "v_V", "i_A"])?;
        if let Some(k) = rows.windows(2).position(|w| w[1][0] <= w[0][0]) {
            return Err(Error::Parse { row: k + 3, msg: "time column must be strictly increasing".into() });
        }
        let mut tr = Self { t: Vec::new(), v: Vec::new(), i: Vec::new() };
        for r in rows {
            tr.t.push(r[0]);
            tr.v.push(r[1]);
            tr.i.push(r[2]);
        }
        tr.validate().map_err(|e| Error::Parse { row: 2, msg: e.to_string() })?;
        Ok(tr)
    }
}

/// How a characterization run is integrated and observed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Instrument<T> {
    pub method: Method,
    pub noise: NoiseSpec<T>,
}

impl<T: Real> Default for Instrument<T> {
    fn default() -> Self {
        Self { method: Method::Rk4, noise: NoiseSpec::noiseless() }
    }
}

/// Drives one device with `wf`. Row `k` of the trace is taken at the end of
/// sample `k` (time `(k+1)·dt`) with that sample's voltage.
pub fn simulate_waveform<T: Real>(
    params: &DeviceParams<T>,
    wf: &VoltageWaveform<T>,
    start: MemristorState<T>,
    instrument: &Instrument<T>,
) -> Result<IvTrace<T>> {
    wf.validate()?;
    let mut noise = instrument.noise.source(0);
    let n = wf.len();
    let mut tr = IvTrace { t: Vec::with_capacity(n), v: Vec::with_capacity(n), i: Vec::with_capacity(n) };
    let t0 = start.t;
    params.integrate_levels(start, &wf.v, wf.dt, 1, instrument.method, |k, s| {
        let v = wf.v[k];
        tr.t.push(t0 + wf.dt * T::from_usize_lossy(k + 1));
        tr.v.push(v);
        tr.i.push(params.current(s, v, &mut noise));
    })?;
    Ok(tr)
}

/// Unipolar triangle 0 → `v_max` → 0 taking `2·half_period`.
pub fn triangle_waveform<T: Real>(v_max: T, half_period: T, dt: T) -> Result<VoltageWaveform<T>> {
    if !(v_max > T::zero() && half_period > T::zero() && dt > T::zero()) {
        return Err(invalid("triangle needs v_max, half period and dt > 0"));
    }
    let n = (T::lit(2.0) * half_period / dt).round().to_usize().unwrap_or(0).max(2);
    let half = T::from_usize_lossy(n) * dt * T::lit(0.5);
    let v = (0..n)
        .map(|k| {
            let t = dt * T::from_usize_lossy(k + 1);
            v_max * (T::one() - (T::one() - t / half).abs())
        })
        .collect();
    VoltageWaveform::new(dt, v)
}

/// Default sweep rate for quasi-steady characterization (2 mV/s).
pub const DEFAULT_SWEEP_RATE: f64 = 2e-3;
pub const DEFAULT_SWEEP_VMAX: f64 = 0.170;

pub fn simulate_sweep<T: Real>(params: &DeviceParams<T>, rate: T, v_max: T, dt: T) -> Result<IvTrace<T>> {
    simulate_sweep_with(params, rate, v_max, dt, &Instrument::default())
}

pub fn simulate_sweep_with<T: Real>(
    params: &DeviceParams<T>,
    rate: T,
    v_max: T,
    dt: T,
    instrument: &Instrument<T>,
) -> Result<IvTrace<T>> {
    if !(rate > T::zero()) {
        return Err(invalid(format!("sweep rate must be > 0, got {rate}")));
    }
    let wf = triangle_waveform(v_max, v_max / rate, dt)?;
    simulate_waveform(params, &wf, params.rest_state(T::zero()), instrument)
}

/// One triangular period at `freq`.
pub fn simulate_hysteresis<T: Real>(params: &DeviceParams<T>, freq: T, v_max: T, dt: T) -> Result<IvTrace<T>> {
    if !(freq > T::zero()) {
        return Err(invalid(format!("frequency must be > 0, got {freq}")));
    }
    let wf = triangle_waveform(v_max, T::lit(0.5) / freq, dt)?;
    simulate_waveform(params, &wf, params.rest_state(T::zero()), &Instrument::default())
}

/// Area enclosed by the closed I–V curve (shoelace).
pub fn loop_area<T: Real>(trace: &IvTrace<T>) -> T {
    let n = trace.len();
    let mut acc = T::zero();
    for k in 0..n {
        let j = (k + 1) % n;
        acc += trace.v[k] * trace.i[j] - trace.v[j] * trace.i[k];
    }
    acc.abs() * T::lit(0.5)
}

/// Loop area divided by the bounding box `max|v|·max|i|`.
pub fn normalized_loop_area<T: Real>(trace: &IvTrace<T>) -> T {
    let vmax = trace.v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let imax = trace.i.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if vmax == T::zero() || imax == T::zero() {
        return T::zero();
    }
    loop_area(trace) / (vmax * imax)
}

/// Paired-pulse facilitation outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PpfResult<T> {
    pub peak_a: T,
    pub peak_b: T,
    pub ppf_percent: T,
}

/// Pulse amplitude, off level and integration step shared by a PPF scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PpfProtocol<T> {
    pub v_pulse: T,
    pub v_off: T,
    pub dt: T,
}

impl<T: Real> Default for PpfProtocol<T> {
    fn default() -> Self {
        Self { v_pulse: T::lit(0.170), v_off: T::zero(), dt: T::lit(1e-4) }
    }
}

/// Two square pulses separated by `ipi`, starting from the exact rest state
/// at `v_off`. Peaks are the largest noiseless currents inside each pulse.
pub fn ppf<T: Real>(params: &DeviceParams<T>, v_pulse: T, v_off: T, pw: T, ipi: T, dt: T) -> Result<PpfResult<T>> {
    if !(pw > T::zero() && ipi > T::zero() && dt > T::zero()) {
        return Err(invalid("pulse width, interval and dt must be > 0"));
    }
    let n_pw = (pw / dt).round().to_usize().unwrap_or(0).max(1);
    let n_ipi = (ipi / dt).round().to_usize().unwrap_or(0).max(1);
    let mut levels = Vec::with_capacity(2 * n_pw + n_ipi);
    levels.extend(std::iter::repeat_n(v_pulse, n_pw));
    levels.extend(std::iter::repeat_n(v_off, n_ipi));
    levels.extend(std::iter::repeat_n(v_pulse, n_pw));
    let (mut peak_a, mut peak_b) = (T::neg_infinity(), T::neg_infinity());
    params.integrate_levels(params.rest_state(v_off), &levels, dt, 1, Method::Rk4, |k, s| {
        let i = params.conductance(s) * levels[k];
        if k < n_pw {
            peak_a = peak_a.max(i);
        } else if k >= n_pw + n_ipi {
            peak_b = peak_b.max(i);
        }
    })?;
    if !(peak_a > T::zero()) {
        return Err(Error::Degenerate(format!("first-pulse peak is {peak_a}; PPF undefined")));
    }
    let ppf_percent = (peak_b - peak_a) / peak_a * T::lit(100.0);
    Ok(PpfResult { peak_a, peak_b, ppf_percent })
}

/// PPF over a grid; row `r` is `pw_grid[r]`, column `c` is `ipi_grid[c]`.
pub fn ppf_surface<T: Real>(
    params: &DeviceParams<T>,
    pw_grid: &[T],
    ipi_grid: &[T],
    protocol: &PpfProtocol<T>,
) -> Result<Vec<Vec<T>>> {
    if pw_grid.is_empty() || ipi_grid.is_empty() {
        return Err(invalid("PPF grids must be non-empty"));
    }
    let cells: Vec<(usize, usize)> =
        (0..pw_grid.len()).flat_map(|r| (0..ipi_grid.len()).map(move |c| (r, c))).collect();
    let values: Vec<Result<T>> = cells
        .par_iter()
        .map(|&(r, c)| {
            ppf(params, protocol.v_pulse, protocol.v_off, pw_grid[r], ipi_grid[c], protocol.dt).map(|p| p.ppf_percent)
        })
        .collect();
    let mut grid = vec![Vec::with_capacity(ipi_grid.len()); pw_grid.len()];
    for ((r, _), v) in cells.into_iter().zip(values) {
        grid[r].push(v?);
    }
    Ok(grid)
}

/// Step-decay protocol: hold `v_high`, drop to each `v_low` in turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StepDecayProtocol<T> {
    pub v_high: T,
    pub v_lows: Vec<T>,
    pub hold_high: T,
    pub hold_low: T,
    pub dt: T,
}

impl<T: Real> StepDecayProtocol<T> {
    /// 500 ms high / 300 ms low holds at 0.1 ms resolution.
    pub fn new(v_high: T, v_lows: Vec<T>) -> Self {
        Self { v_high, v_lows, hold_high: T::lit(0.5), hold_low: T::lit(0.3), dt: T::lit(1e-4) }
    }

    /// Low levels every `step` from `from` up to `v_high - margin`.
    pub fn with_ladder(v_high: T, from: T, step: T, margin: T) -> Self {
        let mut lows = Vec::new();
        let mut v = from;
        while v <= v_high - margin + step * T::lit(1e-9) {
            lows.push(v);
            v += step;
        }
        Self::new(v_high, lows)
    }

    pub fn waveform(&self) -> Result<VoltageWaveform<T>> {
        if !(self.hold_high > T::zero() && self.hold_low > T::zero()) {
            return Err(invalid("hold durations must be > 0"));
        }
        let mut wf = VoltageWaveform::empty(self.dt);
        for &lo in &self.v_lows {
            wf.hold(self.v_high, self.hold_high).hold(lo, self.hold_low);
        }
        wf.validate()?;
        Ok(wf)
    }
}

pub fn simulate_step_decay<T: Real>(
    params: &DeviceParams<T>,
    v_high: T,
    v_lows: &[T],
    hold_high: T,
    hold_low: T,
    dt: T,
) -> Result<IvTrace<T>> {
    let proto = StepDecayProtocol { v_high, v_lows: v_lows.to_vec(), hold_high, hold_low, dt };
    simulate_step_decay_with(params, &proto, &Instrument::default())
}

pub fn simulate_step_decay_with<T: Real>(
    params: &DeviceParams<T>,
    proto: &StepDecayProtocol<T>,
    instrument: &Instrument<T>,
) -> Result<IvTrace<T>> {
    let wf = proto.waveform()?;
    simulate_waveform(params, &wf, params.rest_state(T::zero()), instrument)
}

/// Run of samples at one voltage level, `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<T> {
    pub level: T,
    pub start: usize,
    pub end: usize,
}

/// Splits a trace into runs of constant voltage.
pub fn constant_segments<T: Real>(trace: &IvTrace<T>) -> Vec<Segment<T>> {
    let mut segs = Vec::new();
    let mut start = 0;
    for k in 1..=trace.len() {
        let same = k < trace.len() && {
            let (a, b) = (trace.v[k - 1], trace.v[k]);
            (a - b).abs() <= T::lit(1e-9) * a.abs().max(b.abs()).max(T::lit(1e-3))
        };
        if !same {
            segs.push(Segment { level: trace.v[start], start, end: k });
            start = k;
        }
    }
    segs
}

/// Segments entered by stepping down from a higher level.
pub fn decay_segments<T: Real>(trace: &IvTrace<T>) -> Vec<Segment<T>> {
    let segs = constant_segments(trace);
    segs.windows(2).filter(|w| w[1].level < w[0].level).map(|w| w[1]).collect()
}

/// Exponential decay `g(t) = g0·exp(-t/tau)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DecayFit<T> {
    pub g0: T,
    pub tau: T,
    /// RMS residual of the log-domain fit.
    pub residual: T,
    /// Standard error of `tau` from the residual scatter.
    pub tau_se: T,
}

/// Log-linear least squares of `ln g` against `t`.
pub fn fit_decay<T: Real>(t: &[T], g: &[T]) -> Result<DecayFit<T>> {
    fit_decay_weighted(t, g, &vec![T::one(); t.len()])
}

/// As [`fit_decay`] with per-sample weights on the log-domain residuals.
pub fn fit_decay_weighted<T: Real>(t: &[T], g: &[T], w: &[T]) -> Result<DecayFit<T>> {
    if t.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: t.len(), got: g.len() });
    }
    if t.len() < 3 {
        return Err(invalid(format!("decay fit needs >= 3 samples, got {}", t.len())));
    }
    if let Some(k) = g.iter().position(|x| !(*x > T::zero())) {
        return Err(invalid(format!("conductance sample {k} is not positive")));
    }
    let lg: Vec<T> = g.iter().map(|x| x.ln()).collect();
    let line = weighted_line_fit(t, &lg, w)?;
    let span = t[t.len() - 1] - t[0];
    if !(line.slope < T::zero()) || -line.slope * span.abs() < T::lit(1e-9) {
        return Err(Error::Fit(format!("segment does not decay (slope {})", line.slope)));
    }
    Ok(DecayFit {
        g0: line.intercept.exp(),
        tau: -T::one() / line.slope,
        residual: line.rms,
        tau_se: line.slope_se / (line.slope * line.slope),
    })
}

/// Samples skipped after each voltage step before fitting.
const DECAY_SKIP: usize = 2;

/// Fits the relaxation time constant of one step-down segment.
///
/// The segment's conductance relaxes toward a nonzero asymptote, estimated
/// from the last quarter of the hold and refined against the fitted decay.
/// Only the early part of the excess (above 5 % of its initial value, and
/// above three noise standard deviations) enters the log-linear fit. With
/// noise, samples are weighted by `excess²`, the inverse variance of their
/// logarithm.
pub fn fit_segment_decay<T: Real>(trace: &IvTrace<T>, seg: &Segment<T>, noise_rms: T) -> Result<DecayFit<T>> {
    if !(seg.level > T::zero()) {
        return Err(invalid(format!("cannot read conductance at {} V", seg.level)));
    }
    let start = seg.start + DECAY_SKIP;
    if seg.end < start + 8 {
        return Err(Error::InsufficientData(format!("segment at {} V too short", seg.level)));
    }
    let t0 = trace.t[start];
    let t: Vec<T> = trace.t[start..seg.end].iter().map(|&x| x - t0).collect();
    let g: Vec<T> = trace.i[start..seg.end].iter().map(|&i| i / seg.level).collect();
    let tail_from = g.len() - g.len() / 4;
    let tail_len = T::from_usize_lossy(g.len() - tail_from);
    let tail_mean = g[tail_from..].iter().copied().sum::<T>() / tail_len;
    let sigma_g = noise_rms / seg.level;

    let mut g_inf = tail_mean;
    let mut fit = None;
    for _ in 0..4 {
        let excess: Vec<T> = g.iter().map(|&x| x - g_inf).collect();
        let e0 = excess[0];
        if !(e0 > T::zero()) {
            return Err(Error::Fit(format!("no decay observed at {} V", seg.level)));
        }
        let floor = (e0 * T::lit(0.05)).max(sigma_g * T::lit(3.0));
        let cut = excess.iter().position(|&e| e <= floor).unwrap_or(excess.len());
        if cut < 3 {
            return Err(Error::InsufficientData(format!("decay at {} V buried in noise", seg.level)));
        }
        let w: Vec<T> = if sigma_g > T::zero() {
            excess[..cut].iter().map(|&e| (e / e0) * (e / e0)).collect()
        } else {
            vec![T::one(); cut]
        };
        let f = fit_decay_weighted(&t[..cut], &excess[..cut], &w)?;
        // remove what the fitted exponential still contributes to the tail
        let leftover =
            t[tail_from..].iter().map(|&ti| f.g0 * (-ti / f.tau).exp()).sum::<T>() / tail_len;
        g_inf = tail_mean - leftover;
        fit = Some(f);
    }
    Ok(fit.expect("at least one iteration"))
}

/// `(v_low, tau)` for every step-down segment of a decay trace.
pub fn decay_points<T: Real>(trace: &IvTrace<T>, noise_rms: T) -> Result<Vec<(T, T)>> {
    Ok(decay_fits(trace, noise_rms)?.into_iter().map(|(v, f)| (v, f.tau)).collect())
}

/// Full decay fit for every step-down segment.
pub fn decay_fits<T: Real>(trace: &IvTrace<T>, noise_rms: T) -> Result<Vec<(T, DecayFit<T>)>> {
    decay_segments(trace)
        .iter()
        .map(|seg| fit_segment_decay(trace, seg, noise_rms).map(|f| (seg.level, f)))
        .collect()
}

/// Steady-state law `n_ss = n0·exp(v/ve)` fitted to pore densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SteadyStateFit<T> {
    pub n0: T,
    pub ve: T,
    pub residual: T,
}

pub fn fit_steady_state<T: Real>(points: &[(T, T)]) -> Result<SteadyStateFit<T>> {
    if let Some(k) = points.iter().position(|p| !(p.1 > T::zero())) {
        return Err(invalid(format!("pore density at point {k} is not positive")));
    }
    let v: Vec<T> = points.iter().map(|p| p.0).collect();
    let ln: Vec<T> = points.iter().map(|p| p.1.ln()).collect();
    let line = line_fit(&v, &ln)?;
    if !(line.slope > T::zero()) {
        return Err(Error::Fit(format!("steady state does not grow with voltage (slope {})", line.slope)));
    }
    Ok(SteadyStateFit { n0: line.intercept.exp(), ve: T::one() / line.slope, residual: line.rms })
}

/// Piecewise exponential time-constant law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TauFit<T> {
    pub tau01: T,
    pub vtau1: T,
    pub tau02: T,
    pub vtau2: T,
    pub residual_sub: T,
    pub residual_supra: T,
}

fn branch_fit<T: Real>(points: &[(T, T, T)], which: &str) -> Result<(T, T, T)> {
    let distinct = {
        let mut vs: Vec<T> = points.iter().map(|p| p.0).collect();
        vs.sort_by(|a, b| a.partial_cmp(b).expect("finite voltages"));
        vs.dedup();
        vs.len()
    };
    if distinct < 2 {
        return Err(Error::InsufficientData(format!(
            "{which}-threshold branch has {distinct} distinct voltage(s); need 2"
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > T::zero())) {
        return Err(invalid(format!("time constant {} at {} V is not positive", p.1, p.0)));
    }
    let v: Vec<T> = points.iter().map(|p| p.0).collect();
    let ln: Vec<T> = points.iter().map(|p| p.1.ln()).collect();
    let w: Vec<T> = points.iter().map(|p| p.2).collect();
    let line = weighted_line_fit(&v, &ln, &w)?;
    if !(line.slope > T::zero()) {
        return Err(Error::Fit(format!("{which}-threshold time constant does not grow with voltage")));
    }
    Ok((line.intercept.exp(), T::one() / line.slope, line.rms))
}

/// Independent log-linear fits below and above `vt` (`v < vt` is sub-threshold).
pub fn fit_tau_voltage<T: Real>(points: &[(T, T)], vt: T) -> Result<TauFit<T>> {
    fit_tau_voltage_weighted(&unit_weights(points), vt)
}

fn unit_weights<T: Real>(points: &[(T, T)]) -> Vec<(T, T, T)> {
    points.iter().map(|&(v, tau)| (v, tau, T::one())).collect()
}

/// As [`fit_tau_voltage`] with a weight per `(v, tau, weight)` point.
pub fn fit_tau_voltage_weighted<T: Real>(points: &[(T, T, T)], vt: T) -> Result<TauFit<T>> {
    let (sub, supra): (Vec<_>, Vec<_>) = points.iter().copied().partition(|p| p.0 < vt);
    let (tau01, vtau1, residual_sub) = branch_fit(&sub, "sub")?;
    let (tau02, vtau2, residual_supra) = branch_fit(&supra, "supra")?;
    Ok(TauFit { tau01, vtau1, tau02, vtau2, residual_sub, residual_supra })
}

/// Locates the insertion threshold from `(v, tau)` points.
///
/// Every split between consecutive distinct voltages that leaves two
/// voltages per side is scored by the summed squared log-residual of the
/// two branch fits. The threshold is where the winning branch lines cross,
/// clamped to the gap that produced them.
pub fn estimate_threshold<T: Real>(points: &[(T, T)]) -> Result<T> {
    estimate_threshold_weighted(&unit_weights(points))
}

/// As [`estimate_threshold`] scoring splits by weighted residuals.
pub fn estimate_threshold_weighted<T: Real>(points: &[(T, T, T)]) -> Result<T> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite voltages"));
    let mut levels: Vec<T> = pts.iter().map(|p| p.0).collect();
    levels.dedup();
    if levels.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "threshold search needs 4 distinct voltages, got {}",
            levels.len()
        )));
    }
    let mut best: Option<(T, T)> = None;
    for s in 2..=(levels.len() - 2) {
        let (lo, hi) = (levels[s - 1], levels[s]);
        let split = (lo + hi) * T::lit(0.5);
        let Ok(fit) = fit_tau_voltage_weighted(&pts, split) else { continue };
        let w_sub: T = pts.iter().filter(|p| p.0 < split).map(|p| p.2).sum();
        let w_sup: T = pts.iter().filter(|p| p.0 >= split).map(|p| p.2).sum();
        let sse = fit.residual_sub.powi(2) * w_sub + fit.residual_supra.powi(2) * w_sup;
        let slope_gap = T::one() / fit.vtau1 - T::one() / fit.vtau2;
        let cross = if slope_gap.abs() > T::epsilon() {
            (fit.tau01.ln() - fit.tau02.ln()) / (-slope_gap)
        } else {
            split
        };
        let vt = cross.max(lo).min(hi);
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, vt));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Fit("no admissible threshold split".into()))
}

/// `g_scale` making the steady-state current at `v_high` equal `target`.
pub fn calibrate_scale<T: Real>(params: &DeviceParams<T>, v_high: T, target_current: T) -> T {
    target_current / (v_high * params.steady_state_pores(v_high))
}

/// Voltage at which the steady-state current reaches `target` (bisection on
/// the log of the monotone current law over (0, 2 V]).
pub fn voltage_for_current<T: Real>(params: &DeviceParams<T>, target: T) -> Result<T> {
    if !(target > T::zero()) {
        return Err(invalid("target current must be > 0"));
    }
    let h = |v: T| (params.g_scale * params.n0).ln() + v / params.ve + v.ln() - target.ln();
    let (mut lo, mut hi) = (T::lit(1e-9), T::lit(2.0));
    if h(lo) > T::zero() || h(hi) < T::zero() {
        return Err(Error::Fit("target current outside (0, 2 V] range".into()));
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if h(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

/// Quasi-steady pore densities from a triangular sweep.
///
/// Both ramps are averaged in 1 mV bins. A bin is kept when its mean current
/// clears 200 standard errors of the observation noise and the rising and
/// falling conductances agree within 5 %. Lag on the two ramps is equal and
/// opposite to first order, so their geometric mean cancels it. The pore density is the geometric
/// mean of the two ramps divided by `g_scale`.
pub fn sweep_pore_points<T: Real>(trace: &IvTrace<T>, g_scale: T, noise_rms: T) -> Vec<(T, T)> {
    let bin = T::lit(1e-3);
    let v_min = T::lit(5e-3);
    let peak = trace
        .v
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > trace.v[best] { k } else { best });
    let accumulate = |range: std::ops::Range<usize>| {
        let mut acc: std::collections::BTreeMap<i64, (T, T, usize)> = Default::default();
        for k in range {
            let v = trace.v[k];
            if v < v_min {
                continue;
            }
            let key = (v / bin).floor().to_i64().unwrap_or(i64::MIN);
            let e = acc.entry(key).or_insert((T::zero(), T::zero(), 0));
            e.0 += v;
            e.1 += trace.i[k];
            e.2 += 1;
        }
        acc
    };
    let up = accumulate(0..peak + 1);
    let down = accumulate(peak + 1..trace.len());
    let mut points = Vec::new();
    for (key, &(vs_u, is_u, n_u)) in &up {
        let Some(&(vs_d, is_d, n_d)) = down.get(key) else { continue };
        let (nu, nd) = (T::from_usize_lossy(n_u), T::from_usize_lossy(n_d));
        let (v_u, i_u, v_d, i_d) = (vs_u / nu, is_u / nu, vs_d / nd, is_d / nd);
        let floor = T::lit(200.0) * noise_rms / nu.min(nd).sqrt();
        if !(i_u > floor && i_d > floor) {
            continue;
        }
        let (g_u, g_d) = (i_u / v_u, i_d / v_d);
        if (g_u / g_d).ln().abs() > T::lit(0.05) {
            continue;
        }
        points.push(((v_u + v_d) * T::lit(0.5), (g_u * g_d).sqrt() / g_scale));
    }
    points
}

/// Fitted parameters plus per-stage diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DeviceFitReport<T> {
    pub params: DeviceParams<T>,
    pub residuals: FitResiduals<T>,
    pub tau_points: Vec<(T, T)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FitResiduals<T> {
    pub steady_state: T,
    pub tau_sub: T,
    pub tau_supra: T,
    pub sweep_points: usize,
}

/// Full inversion: steady-state law from a sweep, time-constant branches
/// from a step-decay trace, threshold from the knee (unless given).
pub fn fit_device<T: Real>(
    label: &str,
    sweep: &IvTrace<T>,
    decay: &IvTrace<T>,
    g_scale: T,
    noise_rms: T,
    vt: Option<T>,
) -> Result<DeviceFitReport<T>> {
    let ss_points = sweep_pore_points(sweep, g_scale, noise_rms);
    if ss_points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} quasi-steady sweep points usable",
            ss_points.len()
        )));
    }
    let ss = fit_steady_state(&ss_points)?;
    let fits = decay_fits(decay, noise_rms)?;
    // with noise, weight each time constant by its inverse relative variance
    let weighted: Vec<(T, T, T)> = fits
        .iter()
        .map(|(v, f)| {
            let w = if noise_rms > T::zero() {
                let rel = (f.tau_se / f.tau).max(T::lit(1e-6));
                T::one() / (rel * rel)
            } else {
                T::one()
            };
            (*v, f.tau, w)
        })
        .collect();
    let tau_points: Vec<(T, T)> = weighted.iter().map(|p| (p.0, p.1)).collect();
    let vt = match vt {
        Some(v) => v,
        None => estimate_threshold_weighted(&weighted)?,
    };
    let tau = fit_tau_voltage_weighted(&weighted, vt)?;
    let params = DeviceParams::new(label, ss.n0, ss.ve, tau.tau01, tau.vtau1, tau.tau02, tau.vtau2, vt, g_scale);
    params.validate()?;
    Ok(DeviceFitReport {
        params,
        residuals: FitResiduals {
            steady_state: ss.residual,
            tau_sub: tau.residual_sub,
            tau_supra: tau.residual_supra,
            sweep_points: ss_points.len(),
        },
        tau_points,
    })
}

/// Synthetic sweep and step-decay traces for a device, using the default
/// 2 mV/s sweep to 170 mV and a 5 mV ladder of low levels from 10 mV up to
/// 10 mV below the device's operating voltage.
pub fn synthetic_fit_traces<T: Real>(
    params: &DeviceParams<T>,
    v_high: T,
    noise: NoiseSpec<T>,
) -> Result<(IvTrace<T>, IvTrace<T>)> {
    let dt = T::lit(1e-4);
    let sweep_inst = Instrument { method: Method::Rk4, noise };
    let decay_inst = Instrument {
        method: Method::Rk4,
        noise: NoiseSpec { seed: noise.seed.wrapping_add(1), ..noise },
    };
    let sweep = simulate_sweep_with(params, T::lit(DEFAULT_SWEEP_RATE), T::lit(DEFAULT_SWEEP_VMAX), dt, &sweep_inst)?;
    let proto = StepDecayProtocol::with_ladder(v_high, T::lit(0.010), T::lit(0.005), T::lit(0.010));
    let decay = simulate_step_decay_with(params, &proto, &decay_inst)?;
    Ok((sweep, decay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn p(label: &str) -> DeviceParams<f64> {
        presets::table_row(label).unwrap()
    }

    #[test]
    fn calibration_closure() {
        let base = p("3.0uM");
        let g = calibrate_scale(&base, 0.095, 190e-9);
        let mut q = base.clone();
        q.g_scale = g;
        assert_relative_eq!(q.conductance(&q.rest_state(0.095)), 2.0e-6, max_relative = 1e-12);
        assert_relative_eq!(calibrate_scale(&base, 0.095, 380e-9), 2.0 * g, max_relative = 1e-14);
        // hold at v_high long enough and read the current back
        let wf = VoltageWaveform::new(1e-4, vec![0.095; 8000]).unwrap();
        let tr = simulate_waveform(&q, &wf, q.rest_state(0.0), &Instrument::default()).unwrap();
        assert_relative_eq!(*tr.i.last().unwrap(), 190e-9, max_relative = 1e-6);
        assert_relative_eq!(voltage_for_current(&q, 190e-9).unwrap(), 0.095, max_relative = 1e-9);
    }

    #[test]
    fn slow_sweep_is_quasi_steady_above_threshold() {
        let q = p("3.0uM");
        let tr = simulate_sweep(&q, 2e-3, 0.110, 1e-4).unwrap();
        assert!(tr.t.windows(2).all(|w| w[1] > w[0]));
        let mut checked = 0;
        for k in 0..tr.len() {
            let v = tr.v[k];
            if v > q.vt && v < 0.090 {
                // lag is about rate·tau/ve, under 1 % below 90 mV
                let ideal = q.g_scale * q.steady_state_pores(v) * v;
                assert!((tr.i[k] / ideal - 1.0).abs() < 0.01, "v={v} ratio {}", tr.i[k] / ideal);
                checked += 1;
            }
        }
        assert!(checked > 1000);
        // rising and falling halves agree at matching voltages
        let pts = sweep_pore_points(&tr, q.g_scale, 0.0);
        assert!(pts.iter().filter(|p| p.0 > q.vt && p.0 < 0.09).count() > 25);
    }

    #[test]
    fn fast_sweep_freezes_state() {
        let q = p("3.0uM");
        // 10 ms up and down: the 0 V state barely moves at sub-threshold levels
        let tr = simulate_sweep(&q, 10.0, 0.05, 1e-6).unwrap();
        let na0 = q.steady_state_pores(0.0);
        let k = tr.len() / 4;
        let frozen = q.g_scale * na0 * tr.v[k];
        assert!(tr.i[k] > frozen);
        assert!(tr.i[k] < q.g_scale * q.steady_state_pores(tr.v[k]) * tr.v[k]);
    }

    #[test]
    fn hysteresis_is_pinched_and_vanishes_when_slow() {
        let q = p("3.0uM");
        let tr = simulate_hysteresis(&q, 0.2, 0.17, 1e-4).unwrap();
        assert_eq!(*tr.v.last().unwrap(), 0.0);
        assert_eq!(*tr.i.last().unwrap(), 0.0);
        let fast = normalized_loop_area(&tr);
        let slow = normalized_loop_area(&simulate_hysteresis(&q, 0.005, 0.17, 1e-4).unwrap());
        assert!(fast > 0.0);
        assert!(slow < fast);
    }

    #[test]
    fn ppf_relaxes_with_long_interval() {
        let q = p("3.0uM");
        let r = ppf(&q, 0.17, 0.0, 5e-3, 0.2, 1e-4).unwrap();
        assert!(r.ppf_percent.abs() < 1e-6);
        let close = ppf(&q, 0.17, 0.0, 5e-3, 1e-3, 1e-4).unwrap();
        assert!(close.peak_b >= close.peak_a);
        assert_relative_eq!(
            close.ppf_percent,
            (close.peak_b - close.peak_a) / close.peak_a * 100.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ppf_zero_pulse_is_degenerate() {
        let q = p("3.0uM");
        assert!(matches!(ppf(&q, 0.0, 0.0, 5e-3, 5e-3, 1e-4), Err(Error::Degenerate(_))));
        assert!(ppf(&q, 0.17, 0.0, 0.0, 5e-3, 1e-4).is_err());
    }

    #[test]
    fn ppf_second_peak_never_below_first_at_zero_off() {
        for q in presets::all::<f64>() {
            let surf = ppf_surface(&q, &[1e-3, 5e-3, 20e-3], &[1e-3, 5e-3, 20e-3], &PpfProtocol::default()).unwrap();
            for row in &surf {
                assert!(row.iter().all(|&x| x >= 0.0), "{}: {row:?}", q.label);
                assert!(row.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{}: {row:?}", q.label);
            }
        }
        assert!(ppf_surface(&p("3.0uM"), &[], &[1e-3], &PpfProtocol::default()).is_err());
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 1e-4).collect();
        let g: Vec<f64> = t.iter().map(|&x| 2e-6 * (-x / 4e-3).exp()).collect();
        let f = fit_decay(&t, &g).unwrap();
        assert_relative_eq!(f.tau, 4e-3, max_relative = 1e-10);
        assert_relative_eq!(f.g0, 2e-6, max_relative = 1e-10);
        assert!(fit_decay(&t[..2], &g[..2]).is_err());
        let mut bad = g.clone();
        bad[3] = 0.0;
        assert!(matches!(fit_decay(&t, &bad), Err(Error::InvalidInput(_))));
        assert!(fit_decay(&t, &vec![1e-6; 50]).is_err());
    }

    #[test]
    fn decay_fit_with_multiplicative_noise() {
        use rand::Rng;
        let mut rng = crate::rng::stream(11, "test");
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 1e-4).collect();
        let g: Vec<f64> = t
            .iter()
            .map(|&x| 2e-6 * (-x / 4e-3).exp() * (1.0 + 1e-3 * (rng.random::<f64>() * 2.0 - 1.0) * 3f64.sqrt()))
            .collect();
        let f = fit_decay(&t, &g).unwrap();
        assert!((f.tau / 4e-3 - 1.0).abs() < 0.05);
    }

    #[test]
    fn step_decay_segments_follow_time_constants() {
        let q = p("3.0uM");
        let tr = simulate_step_decay(&q, 0.095, &[0.010, 0.050, 0.100, 0.095], 0.5, 0.3, 1e-4).unwrap();
        let segs = decay_segments(&tr);
        let levels: Vec<f64> = segs.iter().map(|s| s.level).collect();
        assert_eq!(levels, vec![0.010, 0.050, 0.095], "the 100 mV hold steps down to 95 mV");
        let f50 = fit_segment_decay(&tr, &segs[1], 0.0).unwrap();
        assert!((f50.tau / q.time_constant(0.050) - 1.0).abs() < 0.02);
        // 100 mV decays slower than 10 mV in normalized units
        assert!(q.time_constant(0.100) > q.time_constant(0.010));
        // v_low == v_high is one flat run
        let flat = simulate_step_decay(&q, 0.095, &[0.095], 0.5, 0.3, 1e-4).unwrap();
        let all = constant_segments(&flat);
        assert_eq!(all.len(), 1);
        let g_mid = flat.i[6000] / 0.095;
        let g_last = flat.i[flat.len() - 1] / 0.095;
        assert!(((g_mid - g_last) / g_last).abs() < 1e-6);
    }

    #[test]
    fn steady_state_fit_exact() {
        let q = p("3.0uM");
        let pts: Vec<(f64, f64)> = (0..10).map(|k| {
            let v = k as f64 * 0.01;
            (v, q.steady_state_pores(v))
        }).collect();
        let f = fit_steady_state(&pts).unwrap();
        assert_relative_eq!(f.n0, 140.0, max_relative = 1e-9);
        assert_relative_eq!(f.ve, 5.7e-3, max_relative = 1e-9);
        let two = fit_steady_state(&[(0.0, 140.0), (5.7e-3, 140.0 * std::f64::consts::E)]).unwrap();
        assert_relative_eq!(two.n0, 140.0, max_relative = 1e-12);
        assert_relative_eq!(two.ve, 5.7e-3, max_relative = 1e-12);
        assert!(matches!(fit_steady_state(&[(0.05, 1.0), (0.05, 2.0)]), Err(Error::SingularFit { .. })));
    }

    #[test]
    fn tau_fit_exact_and_threshold_knee() {
        let q = p("2.0uM");
        let pts: Vec<(f64, f64)> = (1..=24).map(|k| {
            let v = k as f64 * 5e-3;
            (v, q.time_constant(v))
        }).collect();
        let f = fit_tau_voltage(&pts, q.vt).unwrap();
        assert_relative_eq!(f.tau01, 1.1e-3, max_relative = 1e-9);
        assert_relative_eq!(f.vtau1, 46.4e-3, max_relative = 1e-9);
        assert_relative_eq!(f.tau02, 0.019e-3, max_relative = 1e-9);
        assert_relative_eq!(f.vtau2, 13.9e-3, max_relative = 1e-9);
        let vt = estimate_threshold(&pts).unwrap();
        assert!((vt / q.vt - 1.0).abs() < 0.05, "vt {vt}");
        let below: Vec<_> = pts.iter().copied().filter(|p| p.0 < q.vt).collect();
        assert!(matches!(fit_tau_voltage(&below, q.vt), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn trace_csv_round_trip_and_errors() {
        let tr = IvTrace::new(vec![0.0, 1e-4, 2e-4], vec![0.0, 0.1, 0.2], vec![0.0, 1e-9, 3e-9]).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t_s,v_V,i_A\n"));
        assert_eq!(IvTrace::<f64>::read_csv(&buf[..]).unwrap(), tr);
        assert!(IvTrace::<f64>::read_csv("t_s,v_V\n0,1\n".as_bytes()).is_err());
        assert!(IvTrace::<f64>::read_csv("t_s,v_V,i_A\n".as_bytes()).is_err());
        let e = IvTrace::<f64>::read_csv("t_s,v_V,i_A\n0,0,0\n0,0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { row: 3, .. }), "{e}");
        assert!(IvTrace::new(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
    }
}
