//! Synthetic neural spike-train patterns in four firing classes and their
//! rendering into action-potential voltage traces.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::waveform::VoltageWaveform;
use crate::error::{invalid, Result};
use crate::rng;
use crate::scalar::Real;

/// Length of every pattern in seconds.
pub const PATTERN_DURATION: f64 = 0.62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuralClass {
    Tonic,
    Bursting,
    Adapting,
    Irregular,
}

impl NeuralClass {
    pub const ALL: [NeuralClass; 4] = [Self::Tonic, Self::Bursting, Self::Adapting, Self::Irregular];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tonic => "tonic",
            Self::Bursting => "bursting",
            Self::Adapting => "adapting",
            Self::Irregular => "irregular",
        }
    }
}

impl fmt::Display for NeuralClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NeuralClass {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| invalid(format!("unknown class `{s}` (expected tonic, bursting, adapting or irregular)")))
    }
}

/// Spike-timing templates for the four classes. All times in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    /// First template spike.
    pub onset: f64,
    pub jitter: f64,
    pub tonic_count: usize,
    pub tonic_isi: f64,
    pub burst_count: usize,
    pub burst_size: usize,
    pub burst_isi: f64,
    pub burst_period: f64,
    pub adapt_count: usize,
    pub adapt_first_isi: f64,
    pub adapt_growth: f64,
    pub irregular_rate: f64,
    pub irregular_min: usize,
    pub irregular_max: usize,
    pub irregular_end: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            onset: 0.010,
            jitter: 0.004,
            tonic_count: 20,
            tonic_isi: 0.031,
            burst_count: 5,
            burst_size: 4,
            burst_isi: 0.006,
            burst_period: 0.120,
            adapt_count: 12,
            adapt_first_isi: 0.010,
            adapt_growth: 1.35,
            irregular_rate: 32.0,
            irregular_min: 10,
            irregular_max: 30,
            irregular_end: 0.600,
        }
    }
}

impl TemplateConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.tonic_isi, self.burst_isi, self.burst_period, self.adapt_first_isi, self.irregular_rate];
        if pos.iter().any(|x| !(x.is_finite() && *x > 0.0)) || !(self.onset >= 0.0) || !(self.jitter >= 0.0) {
            return Err(invalid("template intervals and rate must be > 0, onset and jitter >= 0"));
        }
        if self.irregular_min > self.irregular_max || self.irregular_max == 0 {
            return Err(invalid("irregular spike-count bounds are inconsistent"));
        }
        if !(self.adapt_growth >= 1.0) {
            return Err(invalid("adapting growth factor must be >= 1"));
        }
        if self.onset - self.jitter < 0.0 {
            return Err(invalid("onset must leave room for the jitter"));
        }
        Ok(())
    }

    /// Latest template time that keeps the jittered spike and its action
    /// potential inside the window.
    fn latest(&self, ap: &ApShape) -> f64 {
        PATTERN_DURATION - self.jitter - ap.duration()
    }

    fn deterministic(&self, class: NeuralClass, ap: &ApShape) -> Vec<f64> {
        let end = self.latest(ap);
        let times: Vec<f64> = match class {
            NeuralClass::Tonic => (0..self.tonic_count).map(|k| self.onset + k as f64 * self.tonic_isi).collect(),
            NeuralClass::Bursting => (0..self.burst_count)
                .flat_map(|b| {
                    (0..self.burst_size).map(move |s| self.onset + b as f64 * self.burst_period + s as f64 * self.burst_isi)
                })
                .collect(),
            NeuralClass::Adapting => {
                let mut t = self.onset;
                let mut isi = self.adapt_first_isi;
                let mut out = Vec::with_capacity(self.adapt_count);
                for _ in 0..self.adapt_count {
                    out.push(t);
                    t += isi;
                    isi *= self.adapt_growth;
                }
                out
            }
            NeuralClass::Irregular => unreachable!("irregular templates are random"),
        };
        times.into_iter().filter(|&t| t <= end).collect()
    }

    fn irregular<R: Rng>(&self, rng: &mut R, ap: &ApShape) -> Vec<f64> {
        let end = self.irregular_end.min(self.latest(ap));
        let gap = Exp::new(self.irregular_rate).expect("rate validated");
        loop {
            let mut out = Vec::new();
            let mut t = self.onset;
            loop {
                t += gap.sample(rng);
                if t > end {
                    break;
                }
                out.push(t);
            }
            if (self.irregular_min..=self.irregular_max).contains(&out.len()) {
                return out;
            }
        }
    }
}

/// Stereotyped action potential as a piecewise-linear excursion from rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApShape {
    pub rest: f64,
    pub peak: f64,
    pub trough: f64,
    pub rise: f64,
    pub fall: f64,
    pub recover: f64,
}

impl Default for ApShape {
    fn default() -> Self {
        Self { rest: -0.070, peak: 0.040, trough: -0.080, rise: 1e-3, fall: 1.5e-3, recover: 1.5e-3 }
    }
}

impl ApShape {
    pub fn duration(&self) -> f64 {
        self.rise + self.fall + self.recover
    }

    /// Deviation from rest at time `s` after spike onset.
    pub fn deviation(&self, s: f64) -> f64 {
        let (up, down) = (self.peak - self.rest, self.trough - self.rest);
        if s < 0.0 || s >= self.duration() {
            0.0
        } else if s < self.rise {
            up * s / self.rise
        } else if s < self.rise + self.fall {
            let f = (s - self.rise) / self.fall;
            up + (down - up) * f
        } else {
            down * (1.0 - (s - self.rise - self.fall) / self.recover)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NeuralPattern<T> {
    #[serde(rename = "class_label")]
    pub class: NeuralClass,
    pub spike_times: Vec<T>,
    /// Un-jittered positions the spikes were drawn around.
    pub template: Vec<T>,
    pub seed: u64,
}

impl<T: Real> NeuralPattern<T> {
    pub fn duration(&self) -> T {
        T::lit(PATTERN_DURATION)
    }
}

fn jittered<R: Rng>(template: &[f64], jitter: f64, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> =
        template.iter().map(|&t| if jitter > 0.0 { t + rng.random_range(-jitter..=jitter) } else { t }).collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite spike times"));
    out
}

/// `count` jittered instances of `class`. Pattern `i` draws from its own
/// sub-stream, so the set does not depend on generation order.
pub fn gen_neural_patterns<T: Real>(
    class: NeuralClass,
    count: usize,
    seed: u64,
    cfg: &TemplateConfig,
    ap: &ApShape,
) -> Result<Vec<NeuralPattern<T>>> {
    if count == 0 {
        return Err(invalid("pattern count must be > 0"));
    }
    cfg.validate()?;
    let fixed = (class != NeuralClass::Irregular).then(|| cfg.deterministic(class, ap));
    let stream = format!("neural/{}", class.name());
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, &stream, i as u64);
            let template = match &fixed {
                Some(t) => t.clone(),
                None => cfg.irregular(&mut rng, ap),
            };
            let spikes = jittered(&template, cfg.jitter, &mut rng);
            NeuralPattern {
                class,
                spike_times: spikes.into_iter().map(T::lit).collect(),
                template: template.into_iter().map(T::lit).collect(),
                seed,
            }
        })
        .collect())
}

/// Renders action potentials over the resting level and applies
/// `v ↦ scale·v + offset`. Sample `k` is evaluated at `k/sample_rate`;
/// overlapping spikes add their deviations from rest.
pub fn render_neural_waveform<T: Real>(
    pattern: &NeuralPattern<T>,
    scale: T,
    offset: T,
    sample_rate: T,
    ap: &ApShape,
) -> Result<VoltageWaveform<T>> {
    if !(sample_rate >= T::lit(1e3)) {
        return Err(invalid(format!("sample rate must be >= 1 kHz, got {sample_rate}")));
    }
    let rate = sample_rate.as_f64();
    let n = (PATTERN_DURATION * rate).round() as usize;
    let mut dev = vec![0.0f64; n];
    for &s in &pattern.spike_times {
        let s = s.as_f64();
        let first = (s * rate).ceil().max(0.0) as usize;
        let last = (((s + ap.duration()) * rate).ceil() as usize).min(n);
        for (k, d) in dev.iter_mut().enumerate().take(last).skip(first) {
            *d += ap.deviation(k as f64 / rate - s);
        }
    }
    let v = dev.into_iter().map(|d| scale * T::lit(ap.rest + d) + offset).collect();
    VoltageWaveform::new(T::one() / sample_rate, v)
}

/// Stratified train/test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NeuralDataset<T> {
    pub train: Vec<NeuralPattern<T>>,
    pub test: Vec<NeuralPattern<T>>,
}

impl<T: Real> NeuralDataset<T> {
    /// `per_class` patterns of every class, `train_per_class` of each going to
    /// training (defaults 400 and 320).
    pub fn generate(
        per_class: usize,
        train_per_class: usize,
        seed: u64,
        cfg: &TemplateConfig,
        ap: &ApShape,
    ) -> Result<Self> {
        let mut all = Vec::with_capacity(per_class * 4);
        for class in NeuralClass::ALL {
            all.extend(gen_neural_patterns(class, per_class, seed, cfg, ap)?);
        }
        split_neural_dataset(all, train_per_class, seed)
    }
}

/// Takes the first `train_per_class` patterns of each class for training and
/// the rest for testing, then shuffles both sides with a seeded stream.
pub fn split_neural_dataset<T: Real>(
    patterns: Vec<NeuralPattern<T>>,
    train_per_class: usize,
    seed: u64,
) -> Result<NeuralDataset<T>> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut taken = [0usize; 4];
    for p in patterns {
        let c = p.class.index();
        if taken[c] < train_per_class {
            taken[c] += 1;
            train.push(p);
        } else {
            test.push(p);
        }
    }
    if let Some(c) = NeuralClass::ALL.into_iter().find(|c| taken[c.index()] < train_per_class) {
        return Err(invalid(format!("class {c} has fewer than {train_per_class} patterns")));
    }
    train.shuffle(&mut rng::stream(seed, "neural/split-train"));
    test.shuffle(&mut rng::stream(seed, "neural/split-test"));
    Ok(NeuralDataset { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_landmarks() {
        let ap = ApShape::default();
        assert!((ap.deviation(1e-3) - 0.110).abs() < 1e-12);
        assert!((ap.deviation(2.5e-3) + 0.010).abs() < 1e-12);
        assert_eq!(ap.deviation(4e-3), 0.0);
        assert_eq!(ap.deviation(-1e-6), 0.0);
    }

    #[test]
    fn templates_fit_window() {
        let cfg = TemplateConfig::default();
        let ap = ApShape::default();
        assert_eq!(cfg.deterministic(NeuralClass::Tonic, &ap).len(), 20);
        assert_eq!(cfg.deterministic(NeuralClass::Bursting, &ap).len(), 20);
        // the twelfth adapting spike would land past the window
        assert_eq!(cfg.deterministic(NeuralClass::Adapting, &ap).len(), 11);
    }

    #[test]
    fn class_names_parse() {
        for c in NeuralClass::ALL {
            assert_eq!(c.name().parse::<NeuralClass>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
        assert!("spiky".parse::<NeuralClass>().is_err());
    }

    #[test]
    fn empty_pattern_renders_flat() {
        let p = NeuralPattern::<f64> { class: NeuralClass::Tonic, spike_times: vec![], template: vec![], seed: 0 };
        let wf = render_neural_waveform(&p, 1.8, 0.09, 1e4, &ApShape::default()).unwrap();
        assert_eq!(wf.len(), 6200);
        assert!(wf.v.iter().all(|&v| (v - (1.8 * -0.070 + 0.09)).abs() < 1e-15));
        assert!(render_neural_waveform(&p, 1.8, 0.09, 500.0, &ApShape::default()).is_err());
    }
}
