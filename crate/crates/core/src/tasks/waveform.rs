use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Uniformly sampled voltage drive. Sample `k` is the level held over
/// `[k·dt, (k+1)·dt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VoltageWaveform<T> {
    pub dt: T,
    pub v: Vec<T>,
}

impl<T: Real> VoltageWaveform<T> {
    pub fn new(dt: T, v: Vec<T>) -> Result<Self> {
        let wf = Self { dt, v };
        wf.validate()?;
        Ok(wf)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > T::zero()) {
            return Err(invalid(format!("waveform dt must be > 0, got {}", self.dt)));
        }
        if let Some(k) = self.v.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("waveform sample {k} is not finite")));
        }
        Ok(())
    }

    pub fn empty(dt: T) -> Self {
        Self { dt, v: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn duration(&self) -> T {
        self.dt * T::from_usize_lossy(self.v.len())
    }

    /// Samples needed to cover `duration`, rounded to the nearest whole sample.
    pub fn samples_for(&self, duration: T) -> usize {
        (duration / self.dt).round().to_usize().unwrap_or(0)
    }

    /// Appends a constant level held for `duration` (rounded to whole samples).
    pub fn hold(&mut self, level: T, duration: T) -> &mut Self {
        let n = self.samples_for(duration);
        self.v.extend(std::iter::repeat_n(level, n));
        self
    }

    pub fn append(&mut self, other: &Self) {
        self.v.extend_from_slice(&other.v);
    }

    /// Pointwise `scale·v + offset`.
    pub fn affine(&self, scale: T, offset: T) -> Self {
        Self { dt: self.dt, v: self.v.iter().map(|&x| scale * x + offset).collect() }
    }

    /// CSV with header `t_s,v_V`; `t` is the start of each held sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,v_V")?;
        for (k, v) in self.v.iter().enumerate() {
            writeln!(w, "{},{}", self.dt * T::from_usize_lossy(k), v)?;
        }
        Ok(())
    }

    /// Reads the `t_s,v_V` format. Spacing is taken from the first two rows
    /// and every later row must agree with it to 1e-6 relative.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = read_columns::<T, R>(r, &["t_s", "v_V"])?;
        if rows.len() < 2 {
            return Err(Error::Parse { row: rows.len() + 1, msg: "need at least two samples".into() });
        }
        let dt = rows[1][0] - rows[0][0];
        if !(dt > T::zero()) {
            return Err(Error::Parse { row: 3, msg: "time column must increase".into() });
        }
        for (k, row) in rows.iter().enumerate() {
            let expect = rows[0][0] + dt * T::from_usize_lossy(k);
            if (row[0] - expect).abs() > T::lit(1e-6) * dt.max(expect.abs()) {
                return Err(Error::Parse { row: k + 2, msg: "samples must be uniformly spaced".into() });
            }
        }
        Self::new(dt, rows.into_iter().map(|r| r[1]).collect())
    }
}

/// Parses a headed numeric CSV, requiring exactly `header` as the columns.
/// Row numbers in errors are 1-based file lines (header is line 1).
pub(crate) fn read_columns<T: Real, R: Read>(r: R, header: &[&str]) -> Result<Vec<Vec<T>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut records = rdr.records();
    let head = match records.next() {
        None => return Err(Error::Parse { row: 1, msg: "empty file".into() }),
        Some(rec) => rec.map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?,
    };
    let got: Vec<&str> = head.iter().collect();
    if got != header {
        return Err(Error::Parse { row: 1, msg: format!("expected header `{}`, got `{}`", header.join(","), got.join(",")) });
    }
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row: line, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::Parse { row: line, msg: format!("expected {} fields, got {}", header.len(), rec.len()) });
        }
        let mut row = Vec::with_capacity(header.len());
        for field in rec.iter() {
            let x: f64 = field.parse().map_err(|_| Error::Parse { row: line, msg: format!("not a number: `{field}`") })?;
            if !x.is_finite() {
                return Err(Error::Parse { row: line, msg: format!("non-finite value `{field}`") });
            }
            row.push(T::lit(x));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { row: 2, msg: "no data rows".into() });
    }
    Ok(rows)
}
