//! Trained output layers: least-squares regression and two small sigmoid
//! classifiers trained by gradient descent on binary cross-entropy.

mod conv;
mod fc;
mod linear;

use std::io::Write;

use rand::Rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::scalar::Real;

pub use conv::ConvFcReadout;
pub use fc::FcReadout;
pub use linear::{predict_linear, train_linear, LinearReadout};

/// Number of output classes.
pub const CLASSES: usize = 4;

/// Architecture descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Arch {
    /// Affine regression over `inputs` features.
    Linear { inputs: usize },
    /// Sigmoid layer over a flattened feature vector.
    Fc { inputs: usize },
    /// Valid convolution with one `(rows, kernel)` filter across an
    /// `(rows, cols)` block, then a sigmoid layer.
    ConvFc { rows: usize, cols: usize, kernel: usize },
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Arch::Linear { inputs } | Arch::Fc { inputs } if inputs == 0 => Err(invalid("layer needs >= 1 input")),
            Arch::ConvFc { rows, cols, kernel } => {
                if rows == 0 || cols == 0 || kernel == 0 {
                    Err(invalid("conv shape entries must be >= 1"))
                } else if kernel > cols {
                    Err(invalid(format!("kernel width {kernel} exceeds {cols} nodes")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Flattened feature length the model consumes.
    pub fn inputs(&self) -> usize {
        match *self {
            Arch::Linear { inputs } | Arch::Fc { inputs } => inputs,
            Arch::ConvFc { rows, cols, .. } => rows * cols,
        }
    }
}

/// Trained-parameter count of an architecture.
pub fn param_count(arch: Arch) -> usize {
    match arch {
        Arch::Linear { inputs } => inputs + 1,
        Arch::Fc { inputs } => CLASSES * inputs + CLASSES,
        Arch::ConvFc { rows, cols, kernel } => CLASSES * (cols - kernel + 1) + CLASSES + rows * kernel + 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Mini-batch size; `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Stop once the loss improved by less than `min_improvement` over this
    /// many epochs.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 2000,
            seed: 2024,
            init_scale: 0.1,
            batch_size: None,
            patience: 50,
            min_improvement: 1e-7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(invalid("init scale must be >= 0"));
        }
        if self.batch_size == Some(0) {
            return Err(invalid("batch size must be >= 1"));
        }
        Ok(())
    }
}

/// What training produced besides the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub learning_rate: f64,
}

/// Differentiable classifier with a flat parameter vector.
pub trait Network<T: Real>: Sync {
    fn arch(&self) -> Arch;
    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];
    /// Pre-activations of the four outputs.
    fn logits(&self, x: &[T]) -> [T; CLASSES];
    /// Adds `∂L/∂θ` given `∂L/∂z` for one sample to `grad`.
    fn backprop(&self, x: &[T], dz: &[T; CLASSES], grad: &mut [T]);
}

fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Samples per parallel gradient chunk; chunk sums are reduced in order.
const CHUNK: usize = 64;

/// Mean binary cross-entropy over all samples and outputs, and its gradient.
pub fn loss_and_grad<T: Real, N: Network<T>>(net: &N, x: &[Vec<T>], labels: &[usize]) -> (T, Vec<T>) {
    let np = net.params().len();
    let scale = T::one() / T::from_usize_lossy(x.len() * CLASSES);
    let parts: Vec<(T, Vec<T>)> = x
        .par_chunks(CHUNK)
        .zip(labels.par_chunks(CHUNK))
        .map(|(xs, ys)| {
            let mut grad = vec![T::zero(); np];
            let mut loss = T::zero();
            for (xi, &yi) in xs.iter().zip(ys) {
                let z = net.logits(xi);
                let mut dz = [T::zero(); CLASSES];
                for k in 0..CLASSES {
                    let y = if k == yi { T::one() } else { T::zero() };
                    loss += softplus(z[k]) - y * z[k];
                    dz[k] = (sigmoid(z[k]) - y) * scale;
                }
                net.backprop(xi, &dz, &mut grad);
            }
            (loss, grad)
        })
        .collect();
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); np];
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    (loss * scale, grad)
}

/// Argmax of the output activations; ties go to the lower class index.
pub fn classify<T: Real, N: Network<T>>(net: &N, x: &[T]) -> usize {
    argmax(&net.logits(x))
}

pub fn argmax<T: Real>(z: &[T; CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..CLASSES {
        if z[k] > z[best] {
            best = k;
        }
    }
    best
}

pub fn classify_all<T: Real, N: Network<T>>(net: &N, x: &[Vec<T>]) -> Vec<usize> {
    x.par_iter().map(|xi| classify(net, xi)).collect()
}

fn check_data<T: Real>(arch: Arch, x: &[Vec<T>], labels: &[usize]) -> Result<()> {
    if x.is_empty() {
        return Err(invalid("no training samples"));
    }
    if x.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: labels.len() });
    }
    if let Some(bad) = x.iter().find(|r| r.len() != arch.inputs()) {
        return Err(Error::DimensionMismatch { expected: arch.inputs(), got: bad.len() });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= CLASSES) {
        return Err(invalid(format!("label {l} out of range")));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("features must be finite"));
    }
    Ok(())
}

pub(crate) fn init_params<T: Real>(n: usize, cfg: &TrainConfig) -> Vec<T> {
    let mut rng = rng::stream(cfg.seed, "readout/init");
    let s = cfg.init_scale;
    (0..n).map(|_| T::lit(if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 })).collect()
}

/// Gradient descent on mean BCE. Returns the per-epoch loss trace (loss
/// before each update) and metadata.
pub fn train<T: Real, N: Network<T>>(
    net: &mut N,
    x: &[Vec<T>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, TrainMeta)> {
    cfg.validate()?;
    check_data(net.arch(), x, labels)?;
    let lr = T::lit(cfg.learning_rate);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut shuffle = rng::stream(cfg.seed, "readout/batches");
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let loss = match cfg.batch_size {
            None => {
                let (loss, grad) = loss_and_grad(net, x, labels);
                apply(net, &grad, lr);
                loss
            }
            Some(bs) => {
                order.shuffle(&mut shuffle);
                let mut total = T::zero();
                for batch in order.chunks(bs) {
                    let bx: Vec<Vec<T>> = batch.iter().map(|&i| x[i].clone()).collect();
                    let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                    let (loss, grad) = loss_and_grad(net, &bx, &by);
                    total += loss * T::from_usize_lossy(batch.len());
                    apply(net, &grad, lr);
                }
                total / T::from_usize_lossy(x.len())
            }
        };
        let loss = loss.as_f64();
        if !loss.is_finite() || net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        trace.push(loss);
        if epoch >= cfg.patience && cfg.patience > 0 && trace[epoch - cfg.patience] - loss < cfg.min_improvement {
            break;
        }
    }
    let (final_loss, _) = loss_and_grad(net, x, labels);
    let meta = TrainMeta {
        seed: cfg.seed,
        epochs_run: trace.len(),
        final_loss: final_loss.as_f64(),
        learning_rate: cfg.learning_rate,
    };
    Ok((trace, meta))
}

fn apply<T: Real, N: Network<T>>(net: &mut N, grad: &[T], lr: T) {
    for (p, g) in net.params_mut().iter_mut().zip(grad) {
        *p -= lr * *g;
    }
}

pub fn write_loss_csv<W: Write>(trace: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "epoch,loss")?;
    for (i, l) in trace.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    Ok(())
}

/// Serialized model: architecture, flat parameters, training metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelFile<T> {
    pub arch: Arch,
    pub params: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<TrainMeta>,
}

impl<T: Real> ModelFile<T> {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.params.len() != param_count(self.arch) {
            return Err(Error::DimensionMismatch { expected: param_count(self.arch), got: self.params.len() });
        }
        Ok(())
    }
}

/// A trained classifier of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Classifier<T> {
    Fc(FcReadout<T>),
    ConvFc(ConvFcReadout<T>),
}

impl<T: Real> Classifier<T> {
    /// Freshly initialized network for `arch`.
    pub fn init(arch: Arch, cfg: &TrainConfig) -> Result<Self> {
        arch.validate()?;
        match arch {
            Arch::Fc { inputs } => Ok(Self::Fc(FcReadout::init(inputs, cfg))),
            Arch::ConvFc { rows, cols, kernel } => Ok(Self::ConvFc(ConvFcReadout::init(rows, cols, kernel, cfg)?)),
            Arch::Linear { .. } => Err(invalid("linear readout is not a classifier")),
        }
    }

    pub fn from_file(file: &ModelFile<T>) -> Result<Self> {
        file.validate()?;
        match file.arch {
            Arch::Fc { inputs } => Ok(Self::Fc(FcReadout::from_params(inputs, file.params.clone())?)),
            Arch::ConvFc { rows, cols, kernel } => {
                Ok(Self::ConvFc(ConvFcReadout::from_params(rows, cols, kernel, file.params.clone())?))
            }
            Arch::Linear { .. } => Err(invalid("linear readout is not a classifier")),
        }
    }

    pub fn to_file(&self, meta: Option<TrainMeta>) -> ModelFile<T> {
        ModelFile { arch: self.arch(), params: self.params().to_vec(), meta }
    }

    pub fn train(&mut self, x: &[Vec<T>], labels: &[usize], cfg: &TrainConfig) -> Result<(Vec<f64>, TrainMeta)> {
        match self {
            Self::Fc(n) => train(n, x, labels, cfg),
            Self::ConvFc(n) => train(n, x, labels, cfg),
        }
    }

    pub fn predict(&self, x: &[Vec<T>]) -> Vec<usize> {
        match self {
            Self::Fc(n) => classify_all(n, x),
            Self::ConvFc(n) => classify_all(n, x),
        }
    }
}

impl<T: Real> Network<T> for Classifier<T> {
    fn arch(&self) -> Arch {
        match self {
            Self::Fc(n) => n.arch(),
            Self::ConvFc(n) => n.arch(),
        }
    }

    fn params(&self) -> &[T] {
        match self {
            Self::Fc(n) => n.params(),
            Self::ConvFc(n) => n.params(),
        }
    }

    fn params_mut(&mut self) -> &mut [T] {
        match self {
            Self::Fc(n) => n.params_mut(),
            Self::ConvFc(n) => n.params_mut(),
        }
    }

    fn logits(&self, x: &[T]) -> [T; CLASSES] {
        match self {
            Self::Fc(n) => n.logits(x),
            Self::ConvFc(n) => n.logits(x),
        }
    }

    fn backprop(&self, x: &[T], dz: &[T; CLASSES], grad: &mut [T]) {
        match self {
            Self::Fc(n) => n.backprop(x, dz, grad),
            Self::ConvFc(n) => n.backprop(x, dz, grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_closed_forms() {
        assert_eq!(param_count(Arch::Fc { inputs: 60 }), 244);
        assert_eq!(param_count(Arch::Fc { inputs: 465 }), 1864);
        assert_eq!(param_count(Arch::ConvFc { rows: 3, cols: 20, kernel: 9 }), 80);
        assert_eq!(param_count(Arch::ConvFc { rows: 1, cols: 20, kernel: 13 }), 50);
        assert_eq!(param_count(Arch::Linear { inputs: 5 }), 6);
        assert!(Arch::ConvFc { rows: 3, cols: 5, kernel: 6 }.validate().is_err());
    }

    #[test]
    fn stable_activations() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
    }

    #[test]
    fn argmax_prefers_lower_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
        assert_eq!(argmax(&[0.0f64; 4]), 0);
    }

    #[test]
    fn train_config_checks() {
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: Some(0), ..Default::default() }.validate().is_err());
    }
}
