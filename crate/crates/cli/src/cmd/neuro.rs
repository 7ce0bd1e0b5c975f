use memres::neuro::{neural_features, train_classifier, NeuralOutcome};
use memres::presets::PresetBook;
use memres::readout::write_loss_csv;
use memres::reservoir::ReservoirConfig;
use memres::tasks::NeuralDataset;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::{ensure_dir, print_json, seed_dir, write_json, write_with};

fn fit(
    cfg: &ExperimentConfig,
    bank: &ReservoirConfig<f64>,
    data: &NeuralDataset<f64>,
) -> CliResult<(NeuralOutcome<f64>, memres::reservoir::Normalizer<f64>)> {
    let feats = neural_features(bank, data, &cfg.neural.drive(), cfg.neural.norm)?;
    let outcome = train_classifier(&feats, cfg.readout, &cfg.train)?;
    Ok((outcome, feats.normalizer))
}

pub fn run(cfg: &ExperimentConfig, book: &PresetBook<f64>, per_offset: bool) -> CliResult<()> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    ensure_dir(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let n = &cfg.neural;
    let mut runs = Vec::new();
    let mut params = 0;
    for &seed in &cfg.seeds {
        let bank = cfg.reservoir(book, seed)?;
        let data = NeuralDataset::generate(n.per_class, n.train_per_class, seed, &n.templates, &n.ap)?;
        let (o, normalizer) = fit(cfg, &bank, &data)?;
        params = o.param_count;
        let dir = seed_dir(out, seed)?;
        write_json(&dir.join("model.json"), &o.model.to_file(Some(o.meta.clone())))?;
        write_json(&dir.join("normalizer.json"), &normalizer)?;
        write_json(&dir.join("confusion.json"), &json!({ "train": o.train_report, "test": o.test_report }))?;
        write_with(&dir.join("loss.csv"), |w| write_loss_csv(&o.loss_trace, w))?;
        log::info!("seed {seed}: test accuracy {:.4}", o.test_report.accuracy);

        let mut singles = Vec::new();
        if per_offset {
            for i in 0..bank.len() {
                let one = ReservoirConfig {
                    devices: vec![bank.devices[i].clone()],
                    per_device_offset: vec![bank.offset(i)],
                    ..bank.clone()
                };
                let (s, _) = fit(cfg, &one, &data)?;
                singles.push(json!({
                    "device": bank.devices[i].label,
                    "offset_V": bank.offset(i),
                    "test_accuracy": s.test_report.accuracy,
                    "train_accuracy": s.train_report.accuracy,
                    "param_count": s.param_count,
                }));
            }
        }
        let mut entry = json!({
            "seed": seed,
            "test_accuracy": o.test_report.accuracy,
            "train_accuracy": o.train_report.accuracy,
            "per_class_test_accuracy": o.test_report.per_class,
            "epochs_run": o.meta.epochs_run,
            "final_loss": o.meta.final_loss,
        });
        if per_offset {
            entry["per_offset"] = Value::Array(singles);
        }
        runs.push(entry);
    }
    let summary = json!({
        "task": "neuro",
        "readout": cfg.readout,
        "param_count": params,
        "runs": runs,
    });
    write_json(&out.join("summary.json"), &summary)?;
    print_json(&summary)?;
    Ok(())
}
