use memres::metrics::{evaluate_predictions, nmse, nmse_pair, ConfusionMatrix, NmseKind};
use memres::presets;
use memres::reservoir::ReservoirConfig;
use memres::search::{grid_search, GridSpec};
use memres::tasks::gen_sonds;
use proptest::prelude::*;

proptest! {
    #[test]
    fn nmse_is_non_negative_and_zero_only_on_a_perfect_fit(
        truth in prop::collection::vec(-5.0..5.0f64, 2..50),
        noise in prop::collection::vec(-1.0..1.0f64, 50),
    ) {
        prop_assume!(truth.iter().any(|&y| y != 0.0));
        let pred: Vec<f64> = truth.iter().zip(&noise).map(|(y, e)| y + e).collect();
        let e = nmse(&pred, &truth, NmseKind::Energy).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e == 0.0, pred == truth);
        prop_assert_eq!(nmse(&truth, &truth, NmseKind::Energy).unwrap(), 0.0);
    }

    #[test]
    fn confusion_matrix_accounts_for_every_sample(
        pairs in prop::collection::vec((0..4usize, 0..4usize), 1..200),
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let cm = ConfusionMatrix::from_pairs(&truth, &pred).unwrap();
        prop_assert_eq!(cm.total(), truth.len());
        for c in 0..4 {
            let row: usize = cm.counts[c].iter().sum();
            prop_assert_eq!(row, truth.iter().filter(|&&t| t == c).count());
        }
        let hits = truth.iter().zip(&pred).filter(|(a, b)| a == b).count();
        let report = evaluate_predictions(&truth, &pred).unwrap();
        prop_assert_eq!(report.accuracy, hits as f64 / truth.len() as f64);
        prop_assert_eq!(report.accuracy, cm.correct() as f64 / cm.total() as f64);
        prop_assert_eq!(report.confusion, cm);
    }
}

#[test]
fn energy_and_variance_forms_differ_on_offset_targets() {
    let truth = [1.0f64, 2.0, 3.0, 4.0];
    let pred = [1.1, 1.9, 3.2, 3.9];
    let pair = nmse_pair(&pred, &truth).unwrap();
    assert!((pair.energy - 0.07 / 30.0).abs() < 1e-15);
    assert!((pair.variance - 0.07 / 5.0).abs() < 1e-15);
    assert!(nmse(&[0.0f64, 0.0], &[0.0, 0.0], NmseKind::Energy).is_err());
    assert!(nmse(&[1.0f64, 1.0], &[2.0, 2.0], NmseKind::Variance).is_err());
    assert!(nmse(&[1.0f64], &[1.0, 2.0], NmseKind::Energy).is_err());
}

#[test]
fn confusion_rejects_bad_labels() {
    assert!(ConfusionMatrix::from_pairs(&[0, 4], &[0, 1]).is_err());
    assert!(ConfusionMatrix::from_pairs(&[0, 1], &[0]).is_err());
}

fn small_grid() -> GridSpec<f64> {
    GridSpec {
        gamma: vec![0.03, 0.07, 0.12, 0.16],
        delta: vec![0.0, 0.05, 0.09],
        dt: vec![1e-3, 3e-3, 8e-3],
    }
}

#[test]
fn grid_search_ranks_deterministically_and_refines() {
    let (train, test) = gen_sonds::<f64>(150, 150, 2024).unwrap();
    let cfg = ReservoirConfig::new(presets::all());
    let grid = small_grid();
    let ranked = grid_search(&cfg, &grid, &train, &test, 30, 1e4).unwrap();
    assert_eq!(ranked.len(), grid.len());
    let scores: Vec<f64> = ranked.iter().map(|r| r.nmse_test.unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| grid_search(&cfg, &grid, &train, &test, 30, 1e4).unwrap());
    assert_eq!(ranked, serial);

    let best = &ranked[0];
    let near = grid.neighborhood((best.gamma, best.delta, best.dt), 1);
    let refined = grid_search(&cfg, &near, &train, &test, 30, 1e4).unwrap();
    assert!(refined[0].nmse_test.unwrap() <= best.nmse_test.unwrap());

    let single = GridSpec { gamma: vec![0.07], delta: vec![0.05], dt: vec![3e-3] };
    assert_eq!(grid_search(&cfg, &single, &train, &test, 30, 1e4).unwrap().len(), 1);
}

#[test]
fn failing_cells_are_recorded_not_fatal() {
    let (train, test) = gen_sonds::<f64>(80, 80, 1).unwrap();
    let cfg = ReservoirConfig::new(presets::all());
    // a hold shorter than one sample period cannot be encoded
    let grid = GridSpec { gamma: vec![0.07], delta: vec![0.05], dt: vec![3e-3, 1e-5] };
    let ranked = grid_search(&cfg, &grid, &train, &test, 10, 1e4).unwrap();
    assert_eq!(ranked.len(), 2);
    assert!(ranked[0].nmse_test.is_some());
    assert!(ranked[1].nmse_test.is_none() && ranked[1].error.is_some());
}
