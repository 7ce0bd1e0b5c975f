//! Voltage-driven pore-insertion memristor.
//!
//! The single state variable is the inserted pore density `na`, which relaxes
//! toward a voltage-dependent steady state with a voltage-dependent time
//! constant:
//!
//! ```text
//! d na / dt = (N_ss(V) - na) / tau(V)
//! N_ss(V)   = n0 * exp(V / ve)
//! tau(V)    = tau01 * exp(V / vtau1)   if V <  vt
//!             tau02 * exp(V / vtau2)   if V >= vt
//! G         = g_scale * na
//! ```

use std::sync::atomic::{AtomicBool, Ordering};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{substream, Stream};
use crate::scalar::Real;

/// Fitted constants for one device. Units are SI throughout: volts, seconds,
/// pores per square metre, and siemens·m² per pore for `g_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DeviceParams<T> {
    #[serde(default)]
    pub label: String,
    /// Pore density at 0 V.
    pub n0: T,
    /// e-fold voltage of the steady-state law.
    pub ve: T,
    /// Sub-threshold time constant at 0 V.
    pub tau01: T,
    pub vtau1: T,
    /// Supra-threshold time-constant prefactor.
    pub tau02: T,
    pub vtau2: T,
    /// Insertion threshold. The supra-threshold branch owns `v == vt`.
    pub vt: T,
    /// Conductance per pore times membrane area.
    pub g_scale: T,
}

/// Instantaneous pore density and elapsed time of one device.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MemristorState<T> {
    pub na: T,
    pub t: T,
}

impl<T: Real> MemristorState<T> {
    pub fn new(na: T) -> Self {
        Self { na, t: T::zero() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(invalid(format!("unknown integration method `{other}`"))),
        }
    }
}

/// Steady state and time constant at one fixed voltage. Hot loops hoist this
/// out of the per-step work whenever the drive voltage does not change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxation<T> {
    pub target: T,
    pub tau: T,
}

impl<T: Real> Relaxation<T> {
    #[inline]
    pub fn rate(&self, na: T) -> T {
        (self.target - na) / self.tau
    }

    /// One fixed step with the voltage held. No clamping. RK4 steps past its
    /// stability limit fall back to the closed form.
    #[inline]
    pub fn advance(&self, na: T, dt: T, method: Method) -> T {
        match method {
            Method::Euler => na + dt * self.rate(na),
            Method::Rk4 if dt > self.tau * T::lit(RK4_STABILITY_LIMIT) => {
                warn_unstable(dt, self.tau);
                self.exact(na, dt)
            }
            Method::Rk4 => {
                let half = dt * T::lit(0.5);
                let k1 = self.rate(na);
                let k2 = self.rate(na + half * k1);
                let k3 = self.rate(na + half * k2);
                let k4 = self.rate(na + dt * k3);
                na + dt / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4)
            }
        }
    }

    /// Exact solution after `duration` at this voltage.
    #[inline]
    pub fn exact(&self, na: T, duration: T) -> T {
        self.target + (na - self.target) * (-duration / self.tau).exp()
    }
}

static STIFF_WARNED: AtomicBool = AtomicBool::new(false);
static UNSTABLE_WARNED: AtomicBool = AtomicBool::new(false);

/// Largest `dt/τ` for which classical RK4 is stable on a linear decay.
const RK4_STABILITY_LIMIT: f64 = 2.785;

fn warn_unstable<T: Real>(dt: T, tau: T) {
    if !UNSTABLE_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "rk4 step dt = {dt} is outside the stability region for time constant {tau}; \
             using the closed-form relaxation for such steps (reported once per process)"
        );
    }
}

fn warn_stiff<T: Real>(dt: T, tau: T) {
    if !STIFF_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "euler step dt = {dt} exceeds half the time constant ({tau}); expect accuracy loss \
             (reported once per process)"
        );
    }
}

impl<T: Real> DeviceParams<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(label: impl Into<String>, n0: T, ve: T, tau01: T, vtau1: T, tau02: T, vtau2: T, vt: T, g_scale: T) -> Self {
        Self { label: label.into(), n0, ve, tau01, vtau1, tau02, vtau2, vt, g_scale }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ve", self.ve),
            ("vtau1", self.vtau1),
            ("vtau2", self.vtau2),
            ("tau01", self.tau01),
            ("tau02", self.tau02),
            ("g_scale", self.g_scale),
        ];
        for (name, x) in positive {
            if !(x.is_finite() && x > T::zero()) {
                return Err(invalid(format!("{}: {name} must be finite and > 0, got {x}", self.label)));
            }
        }
        for (name, x) in [("vt", self.vt), ("n0", self.n0)] {
            if !(x.is_finite() && x >= T::zero()) {
                return Err(invalid(format!("{}: {name} must be finite and >= 0, got {x}", self.label)));
            }
        }
        Ok(())
    }

    pub fn steady_state_pores(&self, v: T) -> T {
        self.n0 * (v / self.ve).exp()
    }

    pub fn time_constant(&self, v: T) -> T {
        if v < self.vt {
            self.tau01 * (v / self.vtau1).exp()
        } else {
            self.tau02 * (v / self.vtau2).exp()
        }
    }

    pub fn relaxation(&self, v: T) -> Relaxation<T> {
        Relaxation { target: self.steady_state_pores(v), tau: self.time_constant(v) }
    }

    pub fn derivative(&self, state: &MemristorState<T>, v: T) -> T {
        self.relaxation(v).rate(state.na)
    }

    /// Equilibrium state for a device held at `v` indefinitely.
    pub fn rest_state(&self, v: T) -> MemristorState<T> {
        MemristorState::new(self.steady_state_pores(v))
    }

    /// Advances one fixed step with `v` held over the step; `na` is clamped
    /// at zero afterwards.
    pub fn step(&self, state: &MemristorState<T>, v: T, dt: T, method: Method) -> Result<MemristorState<T>> {
        if !v.is_finite() {
            return Err(invalid(format!("non-finite voltage {v}")));
        }
        if !(dt.is_finite() && dt > T::zero()) {
            return Err(invalid(format!("time step must be finite and > 0, got {dt}")));
        }
        let relax = self.relaxation(v);
        if method == Method::Euler && dt > relax.tau * T::lit(0.5) {
            warn_stiff(dt, relax.tau);
        }
        let na = relax.advance(state.na, dt, method).max(T::zero());
        Ok(MemristorState { na, t: state.t + dt })
    }

    /// Closed-form relaxation at constant `v`; the reference for [`Self::step`].
    pub fn analytic_hold(&self, state: &MemristorState<T>, v: T, duration: T) -> MemristorState<T> {
        if duration <= T::zero() {
            return *state;
        }
        MemristorState { na: self.relaxation(v).exact(state.na, duration), t: state.t + duration }
    }

    pub fn conductance(&self, state: &MemristorState<T>) -> T {
        self.g_scale * state.na
    }

    pub fn current(&self, state: &MemristorState<T>, v: T, noise: &mut NoiseSource<T>) -> T {
        self.conductance(state) * v + noise.sample()
    }

    /// Integrates through a sampled voltage sequence (zero-order hold per
    /// sample, `substeps` integration steps per sample). `observe` sees the
    /// sample index and the state at the end of that sample's interval.
    pub fn integrate_levels<F>(
        &self,
        start: MemristorState<T>,
        levels: &[T],
        sample_dt: T,
        substeps: usize,
        method: Method,
        mut observe: F,
    ) -> Result<MemristorState<T>>
    where
        F: FnMut(usize, &MemristorState<T>),
    {
        if !(sample_dt.is_finite() && sample_dt > T::zero()) {
            return Err(invalid(format!("sample spacing must be > 0, got {sample_dt}")));
        }
        let substeps = substeps.max(1);
        let h = sample_dt / T::from_usize_lossy(substeps);
        let mut state = start;
        let mut cached: Option<(T, Relaxation<T>)> = None;
        for (k, &v) in levels.iter().enumerate() {
            if !v.is_finite() {
                return Err(invalid(format!("non-finite voltage at sample {k}")));
            }
            let relax = match cached {
                Some((cv, r)) if cv == v => r,
                _ => {
                    let r = self.relaxation(v);
                    if method == Method::Euler && h > r.tau * T::lit(0.5) {
                        warn_stiff(h, r.tau);
                    }
                    cached = Some((v, r));
                    r
                }
            };
            for _ in 0..substeps {
                state.na = relax.advance(state.na, h, method).max(T::zero());
            }
            state.t += sample_dt;
            observe(k, &state);
        }
        Ok(state)
    }
}

/// Additive Gaussian observation noise on measured current.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NoiseSpec<T> {
    /// Standard deviation in amps; zero disables noise.
    pub current_rms: T,
    pub seed: u64,
}

impl<T: Real> Default for NoiseSpec<T> {
    fn default() -> Self {
        Self { current_rms: T::zero(), seed: 0 }
    }
}

impl<T: Real> NoiseSpec<T> {
    pub fn noiseless() -> Self {
        Self::default()
    }

    /// Measurement floor of the transimpedance front end (0.8 nA RMS).
    pub fn instrument(seed: u64) -> Self {
        Self { current_rms: T::lit(0.8e-9), seed }
    }

    pub fn is_noiseless(&self) -> bool {
        self.current_rms == T::zero()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.current_rms.is_finite() && self.current_rms >= T::zero()) {
            return Err(invalid(format!("current_rms must be >= 0, got {}", self.current_rms)));
        }
        Ok(())
    }

    /// Independent noise source for consumer `index` (e.g. one per device).
    pub fn source(&self, index: u64) -> NoiseSource<T> {
        NoiseSource {
            rms: self.current_rms,
            rng: (!self.is_noiseless()).then(|| substream(self.seed, "observation-noise", index)),
        }
    }
}

pub struct NoiseSource<T> {
    rms: T,
    rng: Option<Stream>,
}

impl<T: Real> NoiseSource<T> {
    pub fn silent() -> Self {
        Self { rms: T::zero(), rng: None }
    }

    pub fn is_silent(&self) -> bool {
        self.rng.is_none()
    }

    /// One draw; exactly zero (and no RNG consumption) when noiseless.
    pub fn sample(&mut self) -> T {
        match self.rng.as_mut() {
            Some(rng) => {
                let z: f64 = StandardNormal.sample(rng);
                self.rms * T::lit(z)
            }
            None => T::zero(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn p3() -> DeviceParams<f64> {
        presets::table_row("3.0uM").unwrap()
    }

    #[test]
    fn steady_state_values() {
        let p = p3();
        assert_relative_eq!(p.steady_state_pores(0.0), 140.0, max_relative = 1e-12);
        assert_relative_eq!(p.steady_state_pores(p.ve), std::f64::consts::E * 140.0, max_relative = 1e-12);
        // 140 * e^10
        assert_relative_eq!(p.steady_state_pores(0.057), 3.0837e6, max_relative = 1e-4);
    }

    #[test]
    fn time_constant_branches() {
        let p = p3();
        assert_relative_eq!(p.time_constant(0.0), 1.1e-3, max_relative = 1e-12);
        // v == vt belongs to the supra-threshold branch: 0.2 ms * e^3
        let at_vt = p.time_constant(0.057);
        assert_relative_eq!(at_vt, 0.2e-3 * 3.0f64.exp(), max_relative = 1e-12);
        assert_relative_eq!(at_vt, 4.017e-3, max_relative = 1e-3);
        let just_below = p.time_constant(0.057 - 1e-12);
        assert_relative_eq!(just_below, 4.12e-3, max_relative = 2e-3);
        assert!(just_below > at_vt);
        let p1 = presets::table_row::<f64>("1.0uM").unwrap();
        assert_relative_eq!(p1.time_constant(0.050), 3.008e-3, max_relative = 1e-3);
    }

    #[test]
    fn derivative_sign_and_value() {
        let p = p3();
        let rest = p.rest_state(0.08);
        assert_eq!(p.derivative(&rest, 0.08), 0.0);
        let d = p.derivative(&MemristorState::new(0.0), 0.0);
        assert_relative_eq!(d, 140.0 / 1.1e-3, max_relative = 1e-12);
        let above = MemristorState::new(p.steady_state_pores(0.05) * 2.0);
        assert!(p.derivative(&above, 0.05) < 0.0);
    }

    #[test]
    fn step_keeps_fixed_point_and_rejects_bad_input() {
        let p = p3();
        let rest = p.rest_state(0.095);
        for method in [Method::Euler, Method::Rk4] {
            let s = p.step(&rest, 0.095, 1e-4, method).unwrap();
            assert_relative_eq!(s.na, rest.na, max_relative = 1e-14);
            assert_relative_eq!(s.t, 1e-4);
        }
        assert!(p.step(&rest, f64::NAN, 1e-4, Method::Rk4).is_err());
        assert!(p.step(&rest, 0.1, f64::INFINITY, Method::Rk4).is_err());
        assert!(p.step(&rest, 0.1, 0.0, Method::Rk4).is_err());
    }

    #[test]
    fn rk4_reaches_steady_state_after_ten_tau() {
        let p = p3();
        let v = 0.095;
        let tau = p.time_constant(v);
        let n = (10.0 * tau / 1e-4).ceil() as usize;
        let mut s = MemristorState::new(0.0);
        for _ in 0..n {
            s = p.step(&s, v, 1e-4, Method::Rk4).unwrap();
        }
        let oracle = p.analytic_hold(&MemristorState::new(0.0), v, n as f64 * 1e-4);
        assert_relative_eq!(s.na, oracle.na, max_relative = 1e-6);
        assert_relative_eq!(s.na, p.steady_state_pores(v), max_relative = 1e-4);
    }

    #[test]
    fn euler_converges_first_order() {
        // Error against the closed form halves when dt halves.
        let p = p3();
        let v = 0.0;
        let duration = 2e-3;
        let exact = p.analytic_hold(&MemristorState::new(0.0), v, duration).na;
        let err = |dt: f64| {
            let n = (duration / dt).round() as usize;
            let mut s = MemristorState::new(0.0);
            for _ in 0..n {
                s = p.step(&s, v, dt, Method::Euler).unwrap();
            }
            (s.na - exact).abs()
        };
        let (e1, e2, e3) = (err(2e-5), err(1e-5), err(5e-6));
        assert!((e1 / e2 - 2.0).abs() < 0.05, "ratio {}", e1 / e2);
        assert!((e2 / e3 - 2.0).abs() < 0.05, "ratio {}", e2 / e3);
    }

    #[test]
    fn analytic_hold_landmarks() {
        let p = p3();
        let v = 0.07;
        let s0 = MemristorState::new(0.0);
        assert_eq!(p.analytic_hold(&s0, v, 0.0), s0);
        let one_tau = p.analytic_hold(&s0, v, p.time_constant(v));
        assert_relative_eq!(one_tau.na, (1.0 - (-1.0f64).exp()) * p.steady_state_pores(v), max_relative = 1e-12);
        let long = p.analytic_hold(&s0, v, 1e3);
        assert_relative_eq!(long.na, p.steady_state_pores(v), max_relative = 1e-12);
    }

    #[test]
    fn conductance_and_current() {
        let p = p3();
        assert_eq!(p.conductance(&MemristorState::new(0.0)), 0.0);
        let s = MemristorState::new(1e9);
        assert_relative_eq!(p.conductance(&MemristorState::new(2e9)), 2.0 * p.conductance(&s));
        let mut quiet = NoiseSource::silent();
        assert_eq!(p.current(&s, 0.0, &mut quiet), 0.0);
        assert_eq!(p.current(&MemristorState::new(0.0), 0.1, &mut quiet), 0.0);
        let i1 = p.current(&s, 0.05, &mut quiet);
        let i2 = p.current(&s, 0.10, &mut quiet);
        assert_relative_eq!(i2, 2.0 * i1, max_relative = 1e-14);
        // calibrated preset: 190 nA at 95 mV means 2 uS at that steady state
        let g = p.conductance(&p.rest_state(0.095));
        assert_relative_eq!(g, 2.0e-6, max_relative = 1e-12);
    }

    #[test]
    fn noise_draws_have_requested_spread() {
        let spec = NoiseSpec::<f64>::instrument(3);
        let mut src = spec.source(0);
        let xs: Vec<f64> = (0..20000).map(|_| src.sample()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.05e-9);
        assert_relative_eq!(var.sqrt(), 0.8e-9, max_relative = 0.03);
        let mut silent = NoiseSpec::<f64>::noiseless().source(0);
        assert!(silent.is_silent());
        assert_eq!(silent.sample(), 0.0);
    }

    #[test]
    fn validation_rejects_nonpositive_scales() {
        let mut p = p3();
        assert!(p.validate().is_ok());
        p.ve = 0.0;
        assert!(p.validate().is_err());
        let mut q = p3();
        q.n0 = -1.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn single_precision_tracks_closed_form() {
        let p = presets::table_row::<f32>("2.0uM").unwrap();
        let mut s = MemristorState::new(0.0f32);
        let n = 300;
        for _ in 0..n {
            s = p.step(&s, 0.085, 1e-4, Method::Rk4).unwrap();
        }
        let exact = p.analytic_hold(&MemristorState::new(0.0), 0.085, n as f32 * 1e-4);
        assert_relative_eq!(s.na, exact.na, max_relative = 1e-4);
    }
}
