use std::fs::File;
use std::path::Path;

use memres::characterize::{fit_device, IvTrace};
use memres::presets::PresetBook;

use crate::args::FitArgs;
use crate::error::{at, CliError, CliResult};
use crate::output::{print_json, write_json};

fn read_trace(path: &Path) -> CliResult<IvTrace<f64>> {
    let file = at(path, File::open(path))?;
    at(path, IvTrace::read_csv(file).map_err(CliError::from))
}

pub fn run(a: &FitArgs, book: &PresetBook<f64>) -> CliResult<()> {
    let g_scale = match (a.g_scale, &a.device) {
        (Some(g), _) => g,
        (None, Some(label)) => book.get(label)?.g_scale,
        (None, None) => return Err(CliError::input("give --g-scale or --device to fix the conductance per pore")),
    };
    if !(g_scale.is_finite() && g_scale > 0.0) {
        return Err(CliError::input("conductance per pore must be > 0"));
    }
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(CliError::input("--noise must be >= 0"));
    }
    let sweep = read_trace(&a.sweep)?;
    let decay = read_trace(&a.decay)?;
    let report = fit_device(&a.label, &sweep, &decay, g_scale, a.noise, a.vt)?;
    match &a.out {
        Some(path) => write_json(path, &report)?,
        None => print_json(&report)?,
    }
    Ok(())
}
