use memres::readout::{
    loss_and_grad, param_count, predict_linear, train, train_linear, Arch, Classifier, ConvFcReadout, FcReadout,
    ModelFile, Network, TrainConfig,
};
use memres::reservoir::StateMatrix;
use memres::rng;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> StateMatrix<f64> {
    StateMatrix::new(rows, cols, 1, values, (0..cols).map(|c| format!("d{c}")).collect()).unwrap()
}

fn sse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn least_squares_weights_are_a_minimum(seed in any::<u64>(), rows in 12usize..60, cols in 1usize..6) {
        let mut rng = rng::stream(seed, "ols");
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = matrix(rows, cols, values);
        let model = train_linear(&x, &y).unwrap();
        prop_assert_eq!(model.param_count(), cols + 1);
        let base = sse(&predict_linear(&model, &x).unwrap(), &y);
        for k in 0..=cols {
            for h in [1e-3, -1e-3] {
                let mut m = model.clone();
                if k < cols { m.weights[k] += h } else { m.intercept += h }
                let e = sse(&predict_linear(&m, &x).unwrap(), &y);
                prop_assert!(e >= base * (1.0 - 1e-12), "coordinate {} step {}: {} < {}", k, h, e, base);
            }
        }
    }
}

#[test]
fn least_squares_recovers_exact_weights() {
    let mut rng = rng::stream(1, "exact");
    let (rows, cols) = (40, 4);
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w = [0.5, -1.25, 3.0, 0.0];
    let y: Vec<f64> = (0..rows).map(|r| 0.7 + (0..cols).map(|c| w[c] * values[r * cols + c]).sum::<f64>()).collect();
    let model = train_linear(&matrix(rows, cols, values), &y).unwrap();
    for (a, b) in model.weights.iter().zip(w) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!((model.intercept - 0.7).abs() < 1e-10);
    assert_eq!(model.ridge, 0.0);
}

#[test]
fn duplicated_column_falls_back_to_ridge_and_matches_pseudo_inverse() {
    let mut rng = rng::stream(2, "duplicate");
    let rows = 50;
    let mut values = Vec::new();
    for _ in 0..rows {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        values.extend([a, b, a]);
    }
    let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = matrix(rows, 3, values.clone());
    let model = train_linear(&x, &y).unwrap();
    assert!(model.ridge > 0.0);
    assert!((model.weights[0] - model.weights[2]).abs() < 1e-6);

    let design = DMatrix::from_fn(rows, 4, |r, c| if c == 3 { 1.0 } else { values[r * 3 + c] });
    let beta = design.clone().pseudo_inverse(1e-10).unwrap() * DVector::from_vec(y.clone());
    let reference: Vec<f64> = (design * beta).iter().copied().collect();
    let ours = predict_linear(&model, &x).unwrap();
    for (a, b) in ours.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

/// Four well separated Gaussian clusters in 6 dimensions.
fn clusters(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng::stream(seed, "clusters");
    let mut x = Vec::new();
    let mut y = Vec::new();
    for c in 0..4 {
        for _ in 0..per_class {
            x.push((0..6).map(|j| if j == c { 3.0 } else { 0.0 } + rng.random_range(-0.5..0.5)).collect());
            y.push(c);
        }
    }
    (x, y)
}

#[test]
fn small_learning_rate_descends_monotonically() {
    let (x, y) = clusters(10, 3);
    let cfg = TrainConfig { learning_rate: 0.01, epochs: 300, patience: 0, ..TrainConfig::default() };
    let mut fc = FcReadout::init(6, &cfg);
    let (trace, meta) = train(&mut fc, &x, &y, &cfg).unwrap();
    assert_eq!(meta.epochs_run, 300);
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));

    let mut conv = ConvFcReadout::init(1, 6, 3, &cfg).unwrap();
    let (trace, _) = train(&mut conv, &x, &y, &cfg).unwrap();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));

    let fast = TrainConfig { learning_rate: 0.1, epochs: 300, ..TrainConfig::default() };
    let mut fc = FcReadout::init(6, &fast);
    let (trace, meta) = train(&mut fc, &x, &y, &fast).unwrap();
    assert!(meta.final_loss < trace[0]);
}

#[test]
fn separable_clusters_are_classified_perfectly() {
    let (x, y) = clusters(25, 4);
    let cfg = TrainConfig::default();
    let arch = Arch::Fc { inputs: 6 };
    let mut clf = Classifier::init(arch, &cfg).unwrap();
    let (_, meta) = clf.train(&x, &y, &cfg).unwrap();
    assert_eq!(clf.params().len(), param_count(arch));
    assert_eq!(clf.predict(&x), y, "after {} epochs", meta.epochs_run);

    let arch = Arch::ConvFc { rows: 2, cols: 3, kernel: 2 };
    let mut clf = Classifier::init(arch, &cfg).unwrap();
    clf.train(&x, &y, &cfg).unwrap();
    assert_eq!(clf.params().len(), param_count(arch));
}

#[test]
fn mini_batches_also_train() {
    let (x, y) = clusters(20, 5);
    let cfg = TrainConfig { batch_size: Some(16), epochs: 200, ..TrainConfig::default() };
    let mut clf = Classifier::init(Arch::Fc { inputs: 6 }, &cfg).unwrap();
    let (trace, _) = clf.train(&x, &y, &cfg).unwrap();
    assert!(trace.last().unwrap() < &trace[0]);
    assert_eq!(clf.predict(&x), y);
}

#[test]
fn training_is_reproducible_and_files_round_trip() {
    let (x, y) = clusters(5, 6);
    let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
    let arch = Arch::ConvFc { rows: 2, cols: 3, kernel: 2 };
    let mut a = Classifier::init(arch, &cfg).unwrap();
    let mut b = Classifier::init(arch, &cfg).unwrap();
    let (_, meta) = a.train(&x, &y, &cfg).unwrap();
    b.train(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);

    let file = a.to_file(Some(meta.clone()));
    let json = serde_json::to_string(&file).unwrap();
    let back: ModelFile<f64> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.meta.as_ref().unwrap().epochs_run, meta.epochs_run);
    let restored = Classifier::from_file(&back).unwrap();
    assert_eq!(restored.predict(&x), a.predict(&x));

    let mut broken = file.clone();
    broken.params.pop();
    assert!(Classifier::from_file(&broken).is_err());
}

#[test]
fn loss_of_a_zero_network_is_ln2() {
    let (x, y) = clusters(3, 7);
    let fc = FcReadout::from_params(6, vec![0.0; param_count(Arch::Fc { inputs: 6 })]).unwrap();
    let (loss, _) = loss_and_grad(&fc, &x, &y);
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn extreme_logits_do_not_overflow() {
    let mut p = vec![0.0f64; param_count(Arch::Fc { inputs: 1 })];
    p[0] = 1e4;
    let fc = FcReadout::from_params(1, p).unwrap();
    let (loss, grad) = loss_and_grad(&fc, &[vec![1.0], vec![-1.0]], &[1, 0]);
    assert!(loss.is_finite() && grad.iter().all(|g| g.is_finite()));
}
