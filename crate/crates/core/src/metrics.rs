//! Regression and classification scores.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Normalization of the squared-error sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmseKind {
    /// Divided by the target energy `Σ y²`.
    #[default]
    Energy,
    /// Divided by the target variance sum `Σ (y - ȳ)²`.
    Variance,
}

pub fn nmse<T: Real>(pred: &[T], truth: &[T], kind: NmseKind) -> Result<T> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(invalid("NMSE of an empty sequence"));
    }
    let num: T = pred.iter().zip(truth).map(|(&p, &y)| (p - y) * (p - y)).sum();
    let den: T = match kind {
        NmseKind::Energy => truth.iter().map(|&y| y * y).sum(),
        NmseKind::Variance => {
            let mean = truth.iter().copied().sum::<T>() / T::from_usize_lossy(truth.len());
            truth.iter().map(|&y| (y - mean) * (y - mean)).sum()
        }
    };
    if !(den > T::zero()) {
        return Err(Error::Degenerate(format!("{kind:?} NMSE denominator is zero")));
    }
    Ok(num / den)
}

/// Both NMSE variants side by side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NmsePair<T> {
    pub energy: T,
    pub variance: T,
}

pub fn nmse_pair<T: Real>(pred: &[T], truth: &[T]) -> Result<NmsePair<T>> {
    Ok(NmsePair { energy: nmse(pred, truth, NmseKind::Energy)?, variance: nmse(pred, truth, NmseKind::Variance)? })
}

/// Rows are true classes, columns predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 4]; 4],
}

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
        }
        let mut m = Self::default();
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= 4 || p >= 4 {
                return Err(invalid(format!("class index out of range ({t}, {p})")));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Recall per true class; `None` for classes absent from the truth.
    pub fn per_class(&self) -> [Option<f64>; 4] {
        std::array::from_fn(|i| {
            let n: usize = self.counts[i].iter().sum();
            (n > 0).then(|| self.counts[i][i] as f64 / n as f64)
        })
    }
}

/// Accuracy and confusion matrix of predicted class indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub accuracy: f64,
    pub per_class: [Option<f64>; 4],
    pub confusion: ConfusionMatrix,
}

pub fn evaluate_predictions(truth: &[usize], pred: &[usize]) -> Result<ClassifierReport> {
    let confusion = ConfusionMatrix::from_pairs(truth, pred)?;
    Ok(ClassifierReport { accuracy: confusion.accuracy(), per_class: confusion.per_class(), confusion })
}
