use std::path::{Path, PathBuf};

use memres::device::{DeviceParams, Method, NoiseSpec};
use memres::neuro::ReadoutKind;
use memres::presets::PresetBook;
use memres::readout::TrainConfig;
use memres::reservoir::{NeuralDrive, NormMode, ReservoirConfig, DEFAULT_WASHOUT};
use memres::search::GridSpec;
use memres::tasks::{ApShape, EncodingParams, TemplateConfig};
use serde::{Deserialize, Serialize};

use crate::error::{at, CliError, CliResult};

/// Environment variable naming a preset JSON file to use instead of the
/// built-in table.
pub const PRESETS_ENV: &str = "MEMRES_PRESETS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Sonds,
    Neuro,
}

/// A bank entry: a preset label or a full parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceRef {
    Label(String),
    Inline(DeviceParams<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SondsSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub washout: usize,
}

impl Default for SondsSettings {
    fn default() -> Self {
        Self { n_train: 300, n_test: 300, washout: DEFAULT_WASHOUT }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralSettings {
    pub scale: f64,
    pub nodes: usize,
    pub sample_rate: f64,
    pub per_class: usize,
    pub train_per_class: usize,
    pub norm: NormMode,
    pub templates: TemplateConfig,
    pub ap: ApShape,
}

impl Default for NeuralSettings {
    fn default() -> Self {
        let drive = NeuralDrive::<f64>::default();
        Self {
            scale: drive.scale,
            nodes: drive.nodes,
            sample_rate: drive.sample_rate,
            per_class: 400,
            train_per_class: 320,
            norm: NormMode::LogZScore,
            templates: TemplateConfig::default(),
            ap: ApShape::default(),
        }
    }
}

impl NeuralSettings {
    pub fn drive(&self) -> NeuralDrive<f64> {
        NeuralDrive { scale: self.scale, nodes: self.nodes, sample_rate: self.sample_rate, ap: self.ap.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    pub method: Method,
    /// Integration step in seconds.
    pub dt: f64,
    /// Current noise RMS in amps; zero is noiseless.
    pub noise_rms: f64,
}

impl Default for Simulation {
    fn default() -> Self {
        Self { method: Method::Rk4, dt: 1e-4, noise_rms: 0.0 }
    }
}

/// One experiment: which bank, which task, how to encode, how to read out.
/// Voltages in volts, times in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Defaults to all five presets for SONDS and three 3.0uM devices for
    /// the neural task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank: Option<Vec<DeviceRef>>,
    /// Per-device offsets; defaults to 85/90/95 mV for the default neural
    /// bank and zero otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
    pub encoding: EncodingParams<f64>,
    pub sonds: SondsSettings,
    pub neural: NeuralSettings,
    pub readout: ReadoutKind,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub simulation: Simulation,
    /// Axes for the grid search; the default 20×20×20 grid when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec<f64>>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Sonds,
            bank: None,
            offsets: None,
            encoding: EncodingParams::default(),
            sonds: SondsSettings::default(),
            neural: NeuralSettings::default(),
            readout: ReadoutKind::ConvFc { kernel: 9 },
            train: TrainConfig::default(),
            seeds: vec![2024],
            simulation: Simulation::default(),
            grid: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = at(path, std::fs::read_to_string(path))?;
        at(path, serde_json::from_str(&text).map_err(CliError::from))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::input("config needs at least one seed"));
        }
        if let Some(bank) = &self.bank {
            if bank.is_empty() {
                return Err(CliError::input("bank must list at least one device"));
            }
            if let Some(off) = &self.offsets {
                if off.len() != bank.len() {
                    return Err(CliError::input(format!(
                        "{} offsets given for {} devices",
                        off.len(),
                        bank.len()
                    )));
                }
            }
        }
        if self.offsets.as_ref().is_some_and(|o| o.iter().any(|v| !v.is_finite())) {
            return Err(CliError::input("offsets must be finite"));
        }
        if !(self.simulation.dt.is_finite() && self.simulation.dt > 0.0) {
            return Err(CliError::input("simulation.dt must be > 0"));
        }
        if !(self.simulation.noise_rms.is_finite() && self.simulation.noise_rms >= 0.0) {
            return Err(CliError::input("simulation.noise_rms must be >= 0"));
        }
        self.train.validate()?;
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    /// Bank entries and offsets with task defaults filled in.
    pub fn bank_spec(&self) -> (Vec<DeviceRef>, Vec<f64>) {
        let bank = match (&self.bank, self.task) {
            (Some(b), _) => b.clone(),
            (None, Task::Sonds) => memres::presets::LABELS.iter().map(|l| DeviceRef::Label(l.to_string())).collect(),
            (None, Task::Neuro) => vec![DeviceRef::Label("3.0uM".into()); 3],
        };
        let offsets = match (&self.offsets, &self.bank, self.task) {
            (Some(o), _, _) => o.clone(),
            (None, None, Task::Neuro) => vec![0.085, 0.090, 0.095],
            _ => vec![0.0; bank.len()],
        };
        (bank, offsets)
    }

    /// The reservoir for run seed `seed` (which also seeds the noise).
    pub fn reservoir(&self, book: &PresetBook<f64>, seed: u64) -> CliResult<ReservoirConfig<f64>> {
        let (bank, offsets) = self.bank_spec();
        let devices = resolve(&bank, book)?;
        let cfg = ReservoirConfig {
            devices,
            per_device_offset: offsets,
            method: self.simulation.method,
            dt: self.simulation.dt,
            noise: NoiseSpec { current_rms: self.simulation.noise_rms, seed },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn resolve(bank: &[DeviceRef], book: &PresetBook<f64>) -> CliResult<Vec<DeviceParams<f64>>> {
    bank.iter()
        .map(|d| match d {
            DeviceRef::Label(l) => book.get(l).map_err(CliError::from),
            DeviceRef::Inline(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        })
        .collect()
}

/// Presets from `--presets`, else from the environment variable, else the
/// built-in table.
pub fn preset_book(flag: Option<&Path>) -> CliResult<PresetBook<f64>> {
    let env = std::env::var_os(PRESETS_ENV).map(PathBuf::from);
    match flag.map(Path::to_path_buf).or(env) {
        Some(p) => at(&p, PresetBook::load(&p).map_err(CliError::from)),
        None => Ok(PresetBook::builtin()),
    }
}
