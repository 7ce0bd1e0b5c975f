use memres::presets::PresetBook;
use memres::readout::Arch;
use memres::search::evaluate_sonds;
use memres::tasks::gen_sonds;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::{ensure_dir, print_json, seed_dir, write_json, write_predictions};

pub fn run(cfg: &ExperimentConfig, book: &PresetBook<f64>) -> CliResult<()> {
    cfg.validate()?;
    cfg.encoding.validate()?;
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let mut runs = Vec::new();
    let mut labels = Vec::new();
    let mut params = 0;
    for &seed in &cfg.seeds {
        let bank = cfg.reservoir(book, seed)?;
        labels = bank.labels();
        let (train, test) = gen_sonds(cfg.sonds.n_train, cfg.sonds.n_test, seed)?;
        let o = evaluate_sonds(&bank, &cfg.encoding, &train, &test, cfg.sonds.washout)?;
        params = o.model.param_count();
        let dir = seed_dir(out, seed)?;
        let w = cfg.sonds.washout;
        write_predictions(&dir.join("train_predictions.csv"), w, &o.train_truth, &o.train_pred)?;
        write_predictions(&dir.join("test_predictions.csv"), w, &o.test_truth, &o.test_pred)?;
        write_json(
            &dir.join("model.json"),
            &json!({ "arch": Arch::Linear { inputs: o.model.weights.len() }, "model": o.model }),
        )?;
        log::info!("seed {seed}: test NMSE {:.4e}", o.nmse_test.energy);
        runs.push(json!({
            "seed": seed,
            "nmse_train": o.nmse_train,
            "nmse_test": o.nmse_test,
            "ridge": o.model.ridge,
        }));
    }
    let mean = runs.iter().filter_map(|r| r["nmse_test"]["energy"].as_f64()).sum::<f64>() / runs.len() as f64;
    let summary = json!({
        "task": "sonds",
        "devices": labels,
        "param_count": params,
        "mean_nmse_test_energy": mean,
        "runs": runs,
    });
    write_json(&out.join("summary.json"), &summary)?;
    print_json(&summary)?;
    Ok(())
}
