//! Second-order nonlinear dynamic system (SONDS) benchmark:
//! `y[k] = 0.4 y[k-1] + 0.4 y[k-1] y[k-2] + 0.6 u[k]^3 + 0.1`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::waveform::{read_columns, VoltageWaveform};
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Upper end of the input range; inputs are uniform on `[0, U_MAX]`.
pub const U_MAX: f64 = 0.5;

/// Targets for `u` with zero initial history.
pub fn sonds_target<T: Real>(u: &[T]) -> Vec<T> {
    let (a, b, c, d) = (T::lit(0.4), T::lit(0.4), T::lit(0.6), T::lit(0.1));
    let mut y = Vec::with_capacity(u.len());
    let (mut y1, mut y2) = (T::zero(), T::zero());
    for &uk in u {
        let yk = a * y1 + b * y1 * y2 + c * uk * uk * uk + d;
        y.push(yk);
        y2 = y1;
        y1 = yk;
    }
    y
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SondsDataset<T> {
    pub u: Vec<T>,
    pub y: Vec<T>,
    pub seed: u64,
}

impl<T: Real> SondsDataset<T> {
    /// Uniform inputs from the named stream, targets computed from them.
    pub fn generate(n: usize, seed: u64, stream: &str) -> Result<Self> {
        if n == 0 {
            return Err(invalid("SONDS length must be > 0"));
        }
        let mut rng = rng::stream(seed, stream);
        let u: Vec<T> = (0..n).map(|_| T::lit(rng.random_range(0.0..=U_MAX))).collect();
        let y = sonds_target(&u);
        Ok(Self { u, y, seed })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,u,y")?;
        for (k, (u, y)) in self.u.iter().zip(&self.y).enumerate() {
            writeln!(w, "{k},{u},{y}")?;
        }
        Ok(())
    }

    /// Reads `k,u,y`. The seed is not stored in CSV and comes back as 0.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = read_columns::<T, R>(r, &["k", "u", "y"])?;
        for (i, row) in rows.iter().enumerate() {
            if row[0] != T::from_usize_lossy(i) {
                return Err(Error::Parse { row: i + 2, msg: format!("expected k = {i}") });
            }
        }
        Ok(Self { u: rows.iter().map(|r| r[1]).collect(), y: rows.iter().map(|r| r[2]).collect(), seed: 0 })
    }
}

/// Independent train and test sequences (default 300/300).
pub fn gen_sonds<T: Real>(n_train: usize, n_test: usize, seed: u64) -> Result<(SondsDataset<T>, SondsDataset<T>)> {
    Ok((SondsDataset::generate(n_train, seed, "sonds/train")?, SondsDataset::generate(n_test, seed, "sonds/test")?))
}

/// Scale-and-offset hold encoding: `v = gamma·u + delta` for `dt_hold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EncodingParams<T> {
    pub gamma: T,
    pub delta: T,
    pub dt_hold: T,
    pub sample_rate: T,
}

impl<T: Real> Default for EncodingParams<T> {
    /// 160 mV per unit input over a 90 mV offset, 3 ms holds, 10 kHz sampling
    /// (inputs in [0, 0.5] span 90–170 mV).
    fn default() -> Self {
        Self { gamma: T::lit(0.160), delta: T::lit(0.090), dt_hold: T::lit(3e-3), sample_rate: T::lit(1e4) }
    }
}

impl<T: Real> EncodingParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.delta.is_finite()) {
            return Err(invalid("gamma and delta must be finite"));
        }
        if !(self.dt_hold.is_finite() && self.dt_hold > T::zero()) {
            return Err(invalid(format!("hold time must be > 0, got {}", self.dt_hold)));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > T::zero()) {
            return Err(invalid(format!("sample rate must be > 0, got {}", self.sample_rate)));
        }
        if self.samples_per_hold() < 1 {
            return Err(invalid("hold time shorter than one sample period"));
        }
        Ok(())
    }

    /// Hold length in samples, rounded to the nearest whole sample.
    pub fn samples_per_hold(&self) -> usize {
        (self.dt_hold * self.sample_rate).round().to_usize().unwrap_or(0)
    }

    pub fn level(&self, u: T) -> T {
        self.gamma * u + self.delta
    }

    /// One voltage per input point.
    pub fn levels(&self, u: &[T]) -> Vec<T> {
        u.iter().map(|&x| self.level(x)).collect()
    }
}

/// Sampled waveform of the hold encoding.
pub fn encode_hold<T: Real>(u: &[T], enc: &EncodingParams<T>) -> Result<VoltageWaveform<T>> {
    enc.validate()?;
    let per = enc.samples_per_hold();
    let mut v = Vec::with_capacity(u.len() * per);
    for &x in u {
        v.extend(std::iter::repeat_n(enc.level(x), per));
    }
    VoltageWaveform::new(T::one() / enc.sample_rate, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_history_start() {
        assert_eq!(sonds_target(&[0.0f64]), vec![0.1]);
        let y = sonds_target(&[0.5f64, 0.0]);
        assert_relative_eq!(y[0], 0.175);
        assert_relative_eq!(y[1], 0.4 * 0.175 + 0.1);
    }

    #[test]
    fn encoding_levels() {
        let enc = EncodingParams::<f64>::default();
        let wf = encode_hold(&[0.0, 0.5], &enc).unwrap();
        assert_eq!(wf.len(), 60);
        assert_relative_eq!(wf.v[0], 0.090);
        assert_relative_eq!(wf.v[59], 0.170);
        let flat = encode_hold(&[0.1, 0.4], &EncodingParams { gamma: 0.0, ..enc }).unwrap();
        assert!(flat.v.iter().all(|&x| x == 0.090));
        assert!(EncodingParams { dt_hold: 1e-5, ..enc }.validate().is_err());
        assert!(EncodingParams { dt_hold: 0.0, ..enc }.validate().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let (train, _) = gen_sonds::<f64>(5, 1, 3).unwrap();
        let mut buf = Vec::new();
        train.write_csv(&mut buf).unwrap();
        let back = SondsDataset::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(back.u, train.u);
        assert_eq!(back.y, train.y);
        assert!(SondsDataset::<f64>::read_csv("k,u,y\n1,0,0\n".as_bytes()).is_err());
        assert!(gen_sonds::<f64>(0, 1, 1).is_err());
    }
}
