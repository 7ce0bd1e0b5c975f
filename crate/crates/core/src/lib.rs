//! Memristor reservoir computing: device simulation, characterization,
//! benchmark encodings, readout training and hyperparameter search.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix `f64`.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterize;
pub mod device;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod neuro;
pub mod presets;
pub mod readout;
pub mod reservoir;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Device = device::DeviceParams<f64>;
pub type State = device::MemristorState<f64>;
pub type Noise = device::NoiseSpec<f64>;
pub type Trace = characterize::IvTrace<f64>;
pub type Waveform = tasks::VoltageWaveform<f64>;
pub type Encoding = tasks::EncodingParams<f64>;
pub type Sonds = tasks::SondsDataset<f64>;
pub type Pattern = tasks::NeuralPattern<f64>;
pub type Reservoir = reservoir::ReservoirConfig<f64>;
pub type States = reservoir::StateMatrix<f64>;
pub type Linear = readout::LinearReadout<f64>;
pub type Fc = readout::FcReadout<f64>;
pub type ConvFc = readout::ConvFcReadout<f64>;
pub type Grid = search::GridSpec<f64>;
