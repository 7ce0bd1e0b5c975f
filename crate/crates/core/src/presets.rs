//! Built-in device presets for the five alamethicin concentrations and the
//! JSON preset document format (`{ "<label>": { DeviceParams... }, ... }`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::characterize::calibrate_scale;
use crate::device::DeviceParams;
use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Current conducted at each device's operating voltage `V_high`.
pub const CALIBRATION_CURRENT: f64 = 190e-9;

type Row = (f64, f64, f64, f64, f64, f64, f64, f64);

/// Concentration (µM), V_e (mV), N0 (pores/m²), V_τ1 (mV), τ01 (ms), V_τ2 (mV), τ02 (ms), V_T (mV).
const TABLE: [Row; 5] = [
    (1.0, 5.4, 0.044, 45.4, 1.0, 11.4, 0.00085, 107.0),
    (1.5, 5.5, 1.3, 45.4, 1.0, 14.2, 0.017, 85.0),
    (2.0, 5.6, 5.4, 46.4, 1.1, 13.9, 0.019, 79.0),
    (2.5, 5.5, 22.4, 44.4, 1.0, 16.5, 0.076, 69.0),
    (3.0, 5.7, 140.0, 43.2, 1.1, 19.0, 0.2, 57.0),
];

/// Labels in increasing concentration.
pub const LABELS: [&str; 5] = ["1.0uM", "1.5uM", "2.0uM", "2.5uM", "3.0uM"];

fn label_for(conc: f64) -> String {
    format!("{conc:.1}uM")
}

/// Operating voltage where the device conducts [`CALIBRATION_CURRENT`] at
/// steady state. Measured endpoints are 133.6 mV (1.0 µM) and 95 mV (3.0 µM);
/// intermediate concentrations are interpolated linearly.
pub fn v_high_for(conc_um: f64) -> f64 {
    let (c_lo, v_lo, c_hi, v_hi) = (1.0, 0.1336, 3.0, 0.095);
    v_lo + (v_hi - v_lo) * (conc_um - c_lo) / (c_hi - c_lo)
}

/// Operating voltage for a built-in label.
pub fn v_high<T: Real>(label: &str) -> Option<T> {
    TABLE.iter().find(|row| label_for(row.0) == label).map(|row| T::lit(v_high_for(row.0)))
}

/// One calibrated table row by label (e.g. `"3.0uM"`).
pub fn table_row<T: Real>(label: &str) -> Option<DeviceParams<T>> {
    TABLE.iter().find(|row| label_for(row.0) == label).map(|&row| build(row))
}

fn build<T: Real>(row: (f64, f64, f64, f64, f64, f64, f64, f64)) -> DeviceParams<T> {
    let (conc, ve, n0, vtau1, tau01, vtau2, tau02, vt) = row;
    let mut p = DeviceParams::new(
        label_for(conc),
        T::lit(n0),
        T::lit(ve * 1e-3),
        T::lit(tau01 * 1e-3),
        T::lit(vtau1 * 1e-3),
        T::lit(tau02 * 1e-3),
        T::lit(vtau2 * 1e-3),
        T::lit(vt * 1e-3),
        T::one(),
    );
    p.g_scale = calibrate_scale(&p, T::lit(v_high_for(conc)), T::lit(CALIBRATION_CURRENT));
    p
}

/// All five presets in increasing concentration.
pub fn all<T: Real>() -> Vec<DeviceParams<T>> {
    TABLE.iter().map(|&row| build(row)).collect()
}

/// Preset collection keyed by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PresetBook<T>(pub BTreeMap<String, DeviceParams<T>>);

impl<T: Real> PresetBook<T> {
    pub fn builtin() -> Self {
        Self(all().into_iter().map(|p| (p.label.clone(), p)).collect())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut book: Self = serde_json::from_str(text)?;
        for (key, p) in book.0.iter_mut() {
            if p.label.is_empty() {
                p.label = key.clone();
            }
            p.validate()?;
        }
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn get(&self, label: &str) -> Result<DeviceParams<T>> {
        self.0.get(label).cloned().ok_or_else(|| {
            invalid(format!(
                "unknown device `{label}` (known: {})",
                self.0.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn labels(&self) -> Vec<String> {
        self.0.keys().cloned().collect()
    }
}
