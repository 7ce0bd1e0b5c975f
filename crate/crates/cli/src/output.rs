//! Artifact writing. Everything here is deterministic except the sidecar
//! run log, which is the only place wall-clock time appears.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{at, CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    at(dir, fs::create_dir_all(dir))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    at(path, fs::write(path, text))
}

/// Opens `path` for writing and hands a buffered writer to `body`.
pub fn write_with<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> memres::Result<()>,
{
    let file = at(path, File::create(path))?;
    let mut w = BufWriter::new(file);
    at(path, body(&mut w).map_err(CliError::from))?;
    at(path, w.flush())
}

/// Two-column-plus-index CSV of predictions against targets.
pub fn write_predictions(path: &Path, first_index: usize, truth: &[f64], pred: &[f64]) -> CliResult<()> {
    write_with(path, |w| {
        writeln!(w, "k,truth,pred")?;
        for (j, (t, p)) in truth.iter().zip(pred).enumerate() {
            writeln!(w, "{},{t},{p}", first_index + j)?;
        }
        Ok(())
    })
}

pub fn seed_dir(out: &Path, seed: u64) -> CliResult<PathBuf> {
    let dir = out.join(format!("seed-{seed}"));
    ensure_dir(&dir)?;
    Ok(dir)
}

/// Appends one line per invocation to `run.log` in `dir`.
pub fn append_run_log(dir: &Path, args: &[String], status: u8) {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let line = format!("unix_time={stamp} status={status} args={:?}\n", args);
    let path = dir.join("run.log");
    let res = OpenOptions::new().create(true).append(true).open(&path).and_then(|mut f| f.write_all(line.as_bytes()));
    if let Err(e) = res {
        log::warn!("could not append to {}: {e}", path.display());
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
pub fn print_stdout<F>(body: F) -> CliResult<()>
where
    F: FnOnce(&mut std::io::StdoutLock<'static>) -> memres::Result<()>,
{
    let mut out = std::io::stdout().lock();
    match body(&mut out).and_then(|_| out.flush().map_err(memres::Error::from)) {
        Err(memres::Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(CliError::from),
    }
}

pub fn print_json<S: Serialize>(value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    print_stdout(|w| Ok(writeln!(w, "{text}")?))
}
