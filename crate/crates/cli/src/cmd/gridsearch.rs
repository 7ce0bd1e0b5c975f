use memres::presets::PresetBook;
use memres::search::{evaluate_sonds, grid_search, rank_fraction, write_grid_csv, GridSpec};
use memres::tasks::{gen_sonds, EncodingParams};
use serde_json::json;

use crate::config::{ExperimentConfig, Task};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, print_json, write_json, write_with};

pub fn run(
    cfg: &ExperimentConfig,
    book: &PresetBook<f64>,
    points: Option<(usize, usize, usize)>,
    probe: Option<(f64, f64, f64)>,
) -> CliResult<()> {
    cfg.validate()?;
    let grid = match (points, &cfg.grid) {
        (Some((g, d, t)), _) => GridSpec::with_points(g, d, t),
        (None, Some(g)) => g.clone(),
        (None, None) => GridSpec::default(),
    };
    grid.validate()?;
    let seed = cfg.seeds[0];
    if cfg.seeds.len() > 1 {
        log::warn!("grid search uses only the first seed ({seed})");
    }
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    let bank = cfg.reservoir(book, seed)?;
    let (train, test) = gen_sonds(cfg.sonds.n_train, cfg.sonds.n_test, seed)?;
    let rate = cfg.encoding.sample_rate;
    let results = grid_search(&bank, &grid, &train, &test, cfg.sonds.washout, rate)?;
    write_with(&out.join("grid.csv"), |w| write_grid_csv(&results, w))?;
    let failed = results.iter().filter(|r| r.nmse_test.is_none()).count();
    let best = results
        .first()
        .filter(|r| r.nmse_test.is_some())
        .ok_or_else(|| CliError::numerical("no grid cell could be scored"))?;

    let mut best_cfg = cfg.clone();
    best_cfg.task = Task::Sonds;
    best_cfg.encoding = best.encoding(rate);
    best_cfg.grid = None;
    best_cfg.seeds = vec![seed];
    write_json(&out.join("best_config.json"), &best_cfg)?;

    let probe = match probe {
        Some((gamma, delta, dt_hold)) => {
            let enc = EncodingParams { gamma, delta, dt_hold, sample_rate: rate };
            let o = evaluate_sonds(&bank, &enc, &train, &test, cfg.sonds.washout)?;
            let frac = rank_fraction(&results, o.nmse_test.energy);
            json!({
                "gamma_V": gamma,
                "delta_V": delta,
                "dt_s": dt_hold,
                "nmse_test": o.nmse_test.energy,
                "fraction_of_cells_better": frac,
            })
        }
        None => serde_json::Value::Null,
    };
    let summary = json!({
        "seed": seed,
        "cells": results.len(),
        "failed_cells": failed,
        "best": {
            "gamma_V": best.gamma,
            "delta_V": best.delta,
            "dt_s": best.dt,
            "nmse_train": best.nmse_train,
            "nmse_test": best.nmse_test,
        },
        "probe": probe,
    });
    write_json(&out.join("summary.json"), &summary)?;
    print_json(&summary)?;
    Ok(())
}
