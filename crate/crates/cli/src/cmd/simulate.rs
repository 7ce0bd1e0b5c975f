use std::fs::File;

use memres::characterize::{simulate_waveform, Instrument};
use memres::device::NoiseSpec;
use memres::presets::PresetBook;
use memres::tasks::VoltageWaveform;

use crate::args::SimulateArgs;
use crate::error::{at, CliError, CliResult};
use crate::output::{print_stdout, write_with};

pub fn run(a: &SimulateArgs, book: &PresetBook<f64>) -> CliResult<()> {
    let p = book.get(&a.device)?;
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(CliError::input("--noise must be >= 0"));
    }
    let file = at(&a.waveform, File::open(&a.waveform))?;
    let wf = at(&a.waveform, VoltageWaveform::<f64>::read_csv(file).map_err(CliError::from))?;
    let wf = wf.affine(1.0, a.offset);
    let start = p.rest_state(a.start.unwrap_or(a.offset));
    let inst = Instrument { method: a.method.into(), noise: NoiseSpec { current_rms: a.noise, seed: a.seed } };
    let tr = simulate_waveform(&p, &wf, start, &inst)?;
    match &a.out {
        Some(path) => write_with(path, |w| tr.write_csv(w)),
        None => print_stdout(|w| tr.write_csv(w)),
    }
}
