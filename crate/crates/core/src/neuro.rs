//! Neural-activity classification pipeline: reservoir features for a
//! train/test split and a trained classifier on top.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::{evaluate_predictions, ClassifierReport};
use crate::readout::{param_count, Arch, Classifier, TrainConfig, TrainMeta};
use crate::reservoir::{run_neural, NeuralDrive, NormMode, Normalizer, ReservoirConfig, StateMatrix};
use crate::scalar::Real;
use crate::tasks::neural::NeuralDataset;

/// Which classifier sits on the features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReadoutKind {
    Fc,
    /// Convolution spanning all devices with `kernel` nodes.
    ConvFc { kernel: usize },
}

impl ReadoutKind {
    pub fn arch(self, devices: usize, nodes: usize) -> Arch {
        match self {
            Self::Fc => Arch::Fc { inputs: devices * nodes },
            Self::ConvFc { kernel } => Arch::ConvFc { rows: devices, cols: nodes, kernel },
        }
    }
}

/// Normalized features and labels for both splits.
#[derive(Clone, Debug)]
pub struct NeuralFeatures<T> {
    pub train: StateMatrix<T>,
    pub test: StateMatrix<T>,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub normalizer: Normalizer<T>,
}

impl<T: Real> NeuralFeatures<T> {
    fn rows(m: &StateMatrix<T>) -> Vec<Vec<T>> {
        m.rows_iter().take(m.rows).map(<[T]>::to_vec).collect()
    }

    pub fn train_rows(&self) -> Vec<Vec<T>> {
        Self::rows(&self.train)
    }

    pub fn test_rows(&self) -> Vec<Vec<T>> {
        Self::rows(&self.test)
    }
}

/// Drives the bank with every pattern and normalizes with training statistics.
pub fn neural_features<T: Real>(
    config: &ReservoirConfig<T>,
    data: &NeuralDataset<T>,
    drive: &NeuralDrive<T>,
    mode: NormMode,
) -> Result<NeuralFeatures<T>> {
    if data.train.is_empty() || data.test.is_empty() {
        return Err(invalid("both splits need patterns"));
    }
    let raw_train = run_neural(config, &data.train, drive)?;
    let raw_test = run_neural(config, &data.test, drive)?;
    let normalizer = Normalizer::fit(&raw_train, mode)?;
    if !normalizer.flat_columns.is_empty() {
        log::warn!("feature columns {:?} are constant over the training set", normalizer.flat_columns);
    }
    Ok(NeuralFeatures {
        train: normalizer.apply(&raw_train)?,
        test: normalizer.apply(&raw_test)?,
        train_labels: data.train.iter().map(|p| p.class.index()).collect(),
        test_labels: data.test.iter().map(|p| p.class.index()).collect(),
        normalizer,
    })
}

#[derive(Clone, Debug)]
pub struct NeuralOutcome<T> {
    pub model: Classifier<T>,
    pub loss_trace: Vec<f64>,
    pub meta: TrainMeta,
    pub train_report: ClassifierReport,
    pub test_report: ClassifierReport,
    pub param_count: usize,
}

pub fn train_classifier<T: Real>(
    features: &NeuralFeatures<T>,
    kind: ReadoutKind,
    cfg: &TrainConfig,
) -> Result<NeuralOutcome<T>> {
    let arch = kind.arch(features.train.devices, features.train.nodes);
    let mut model = Classifier::init(arch, cfg)?;
    let x_train = features.train_rows();
    let x_test = features.test_rows();
    let (loss_trace, meta) = model.train(&x_train, &features.train_labels, cfg)?;
    let train_report = evaluate_predictions(&features.train_labels, &model.predict(&x_train))?;
    let test_report = evaluate_predictions(&features.test_labels, &model.predict(&x_test))?;
    Ok(NeuralOutcome { model, loss_trace, meta, train_report, test_report, param_count: param_count(arch) })
}
