use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memres::device::Method;
use memres::neuro::ReadoutKind;
use memres::reservoir::NormMode;

use crate::config::{DeviceRef, ExperimentConfig};
use crate::units;

#[derive(Debug, Parser)]
#[command(name = "memres", version, about = "Memristor reservoir simulation, benchmarks and device fitting")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Preset JSON file (overrides MEMRES_PRESETS and the built-in table).
    #[arg(long, global = true)]
    pub presets: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a characterization protocol on one device.
    Characterize(CharacterizeArgs),
    /// Fit device parameters to a sweep trace and a step-decay trace.
    Fit(FitArgs),
    /// Run the SONDS regression benchmark.
    Sonds(SondsArgs),
    /// Run the neural-pattern classification benchmark.
    Neuro(NeuroArgs),
    /// Search the SONDS encoding parameters over a grid.
    Gridsearch(GridArgs),
    /// Drive one device with a voltage waveform file.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Sweep,
    Hysteresis,
    Decay,
    Ppf,
    PpfSurface,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReadoutArg {
    Fc,
    ConvFc,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    #[arg(long)]
    pub device: String,
    #[arg(long, value_enum)]
    pub which: Which,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_parser = units::time, default_value = "0.1ms")]
    pub dt: f64,
    #[arg(long, value_enum, default_value = "rk4")]
    pub method: MethodArg,
    /// Current noise RMS added to recorded traces.
    #[arg(long, value_parser = units::current, default_value = "0A")]
    pub noise: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Sweep rate.
    #[arg(long, value_parser = units::sweep_rate, default_value = "2mV/s")]
    pub rate: f64,
    /// Peak of sweeps and hysteresis loops.
    #[arg(long, value_parser = units::voltage, default_value = "170mV")]
    pub vmax: f64,
    /// Hysteresis drive frequency.
    #[arg(long, value_parser = units::frequency, default_value = "200mHz")]
    pub freq: f64,
    /// Step-decay high level (defaults to the preset's operating voltage).
    #[arg(long, value_parser = units::voltage)]
    pub v_high: Option<f64>,
    #[arg(long, value_parser = units::voltage, default_value = "10mV")]
    pub v_low_from: f64,
    #[arg(long, value_parser = units::voltage, default_value = "5mV")]
    pub v_low_step: f64,
    /// Gap kept between the highest low level and the high level.
    #[arg(long, value_parser = units::voltage, default_value = "10mV")]
    pub v_low_margin: f64,
    #[arg(long, value_parser = units::time, default_value = "500ms")]
    pub hold_high: f64,
    #[arg(long, value_parser = units::time, default_value = "300ms")]
    pub hold_low: f64,
    /// PPF pulse amplitude.
    #[arg(long = "v", value_parser = units::voltage, default_value = "170mV")]
    pub v_pulse: f64,
    /// PPF level between pulses.
    #[arg(long, value_parser = units::voltage, default_value = "0V")]
    pub v_off: f64,
    #[arg(long, value_parser = units::time, default_value = "5ms")]
    pub pw: f64,
    #[arg(long, value_parser = units::time, default_value = "5ms")]
    pub ipi: f64,
    /// Pulse widths for the PPF surface.
    #[arg(long, value_parser = units::time, value_delimiter = ',', default_value = "1ms,2ms,5ms,10ms,20ms,50ms")]
    pub pws: Vec<f64>,
    /// Inter-pulse intervals for the PPF surface.
    #[arg(long, value_parser = units::time, value_delimiter = ',', default_value = "1ms,2ms,5ms,10ms,20ms,50ms,100ms")]
    pub ipis: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rk4,
    Euler,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rk4 => Method::Rk4,
            MethodArg::Euler => Method::Euler,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Slow sweep trace (`t_s,v_V,i_A`).
    #[arg(long)]
    pub sweep: PathBuf,
    /// Step-decay trace (`t_s,v_V,i_A`).
    #[arg(long)]
    pub decay: PathBuf,
    /// Conductance per open pore.
    #[arg(long, value_parser = units::conductance, conflicts_with = "device")]
    pub g_scale: Option<f64>,
    /// Take the conductance per pore from this preset.
    #[arg(long)]
    pub device: Option<String>,
    /// Current noise RMS of the recordings.
    #[arg(long, value_parser = units::current, default_value = "0A")]
    pub noise: f64,
    /// Branch threshold; estimated from the data when omitted.
    #[arg(long, value_parser = units::voltage)]
    pub vt: Option<f64>,
    #[arg(long, default_value = "fitted")]
    pub label: String,
    /// Output JSON; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by the benchmark commands. Each one overrides the matching
/// config field.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Bank device by preset label; repeat for more devices.
    #[arg(long = "device")]
    pub devices: Vec<String>,
    /// Per-device offset; repeat once per device.
    #[arg(long = "offset", value_parser = units::voltage)]
    pub offsets: Vec<f64>,
    /// Run seed; repeat for several runs.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long, value_parser = units::current)]
    pub noise: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, value_parser = units::time)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if !self.devices.is_empty() {
            cfg.bank = Some(self.devices.iter().cloned().map(DeviceRef::Label).collect());
            if self.offsets.is_empty() {
                cfg.offsets = None;
            }
        }
        if !self.offsets.is_empty() {
            cfg.offsets = Some(self.offsets.clone());
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(n) = self.noise {
            cfg.simulation.noise_rms = n;
        }
        if let Some(m) = self.method {
            cfg.simulation.method = m.into();
        }
        if let Some(dt) = self.dt {
            cfg.simulation.dt = dt;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct SondsDataArgs {
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub washout: Option<usize>,
    #[arg(long, value_parser = units::frequency)]
    pub sample_rate: Option<f64>,
}

impl SondsDataArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(n) = self.n_train {
            cfg.sonds.n_train = n;
        }
        if let Some(n) = self.n_test {
            cfg.sonds.n_test = n;
        }
        if let Some(n) = self.washout {
            cfg.sonds.washout = n;
        }
        if let Some(r) = self.sample_rate {
            cfg.encoding.sample_rate = r;
        }
    }
}

#[derive(Debug, Args)]
pub struct SondsArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: SondsDataArgs,
    /// Input scale.
    #[arg(long, value_parser = units::voltage)]
    pub gamma: Option<f64>,
    /// Input offset.
    #[arg(long, value_parser = units::voltage)]
    pub delta: Option<f64>,
    /// Hold time per input.
    #[arg(long, value_parser = units::time)]
    pub hold: Option<f64>,
}

impl SondsArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        self.run.apply(cfg);
        self.data.apply(cfg);
        if let Some(g) = self.gamma {
            cfg.encoding.gamma = g;
        }
        if let Some(d) = self.delta {
            cfg.encoding.delta = d;
        }
        if let Some(h) = self.hold {
            cfg.encoding.dt_hold = h;
        }
    }
}

#[derive(Debug, Args)]
pub struct NeuroArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Input scaling (dimensionless).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Virtual nodes per pattern.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    /// none, z-score, device-max or log-z-score.
    #[arg(long)]
    pub norm: Option<NormMode>,
    #[arg(long, value_enum)]
    pub readout: Option<ReadoutArg>,
    /// Convolution width in nodes.
    #[arg(long)]
    pub kernel: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for weight initialization and batch order.
    #[arg(long)]
    pub train_seed: Option<u64>,
    /// Also train on each device alone and report its accuracy.
    #[arg(long)]
    pub per_offset: bool,
}

impl NeuroArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        self.run.apply(cfg);
        let n = &mut cfg.neural;
        if let Some(x) = self.scale {
            n.scale = x;
        }
        if let Some(x) = self.nodes {
            n.nodes = x;
        }
        if let Some(x) = self.per_class {
            n.per_class = x;
        }
        if let Some(x) = self.train_per_class {
            n.train_per_class = x;
        }
        if let Some(x) = self.norm {
            n.norm = x;
        }
        let kernel = self.kernel.or(match cfg.readout {
            ReadoutKind::ConvFc { kernel } => Some(kernel),
            ReadoutKind::Fc => None,
        });
        match self.readout {
            Some(ReadoutArg::Fc) => cfg.readout = ReadoutKind::Fc,
            Some(ReadoutArg::ConvFc) => cfg.readout = ReadoutKind::ConvFc { kernel: kernel.unwrap_or(9) },
            None => {
                if let (ReadoutKind::ConvFc { .. }, Some(k)) = (cfg.readout, self.kernel) {
                    cfg.readout = ReadoutKind::ConvFc { kernel: k };
                }
            }
        }
        let t = &mut cfg.train;
        if let Some(x) = self.lr {
            t.learning_rate = x;
        }
        if let Some(x) = self.epochs {
            t.epochs = x;
        }
        if let Some(x) = self.batch_size {
            t.batch_size = Some(x);
        }
        if let Some(x) = self.train_seed {
            t.seed = x;
        }
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: SondsDataArgs,
    /// Points per axis (default 20 each); any of these replaces a grid
    /// given in the config.
    #[arg(long)]
    pub gamma_points: Option<usize>,
    #[arg(long)]
    pub delta_points: Option<usize>,
    #[arg(long)]
    pub dt_points: Option<usize>,
    /// Extra cell to score and rank against the grid, as gamma,delta,hold.
    #[arg(long, value_parser = units::encoding_cell)]
    pub probe: Option<(f64, f64, f64)>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub device: String,
    /// Waveform CSV (`t_s,v_V`).
    #[arg(long)]
    pub waveform: PathBuf,
    /// Added to every waveform sample.
    #[arg(long, value_parser = units::voltage, default_value = "0V")]
    pub offset: f64,
    /// The device starts at equilibrium at this voltage (default: the offset).
    #[arg(long, value_parser = units::voltage)]
    pub start: Option<f64>,
    #[arg(long, value_enum, default_value = "rk4")]
    pub method: MethodArg,
    #[arg(long, value_parser = units::current, default_value = "0A")]
    pub noise: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Output trace CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
