//! Benchmark datasets and their voltage encodings.

pub mod neural;
pub mod sonds;
pub mod waveform;

pub use neural::{
    gen_neural_patterns, render_neural_waveform, split_neural_dataset, ApShape, NeuralClass, NeuralDataset,
    NeuralPattern, TemplateConfig, PATTERN_DURATION,
};
pub use sonds::{encode_hold, gen_sonds, sonds_target, EncodingParams, SondsDataset, U_MAX};
pub use waveform::VoltageWaveform;
