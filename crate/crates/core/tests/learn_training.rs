use polyset::dataset::{generate_corpus, split_records, DatasetConfig, SplitUnit, DEFAULT_FRACTIONS};
use polyset::encode::{EmbeddingKind, EncoderConfig};
use polyset::learn::{loss_and_gradients, train, train_with_observer, MlpModel, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences on every parameter.
fn numeric_gradient(model: &MlpModel, xs: &[&[f64]], ys: &[f64], h: f64) -> Vec<f64> {
    let mut probe = model.clone();
    (0..model.params().len())
        .map(|i| {
            let p = model.params()[i];
            probe.params_mut()[i] = p + h;
            let up = loss_and_gradients(&probe, xs, ys).unwrap().0;
            probe.params_mut()[i] = p - h;
            let down = loss_and_gradients(&probe, xs, ys).unwrap().0;
            probe.params_mut()[i] = p;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6)).fold(0.0, f64::max)
}

fn random_instance(dims: &[usize], seed: u64) -> (MlpModel, Vec<Vec<f64>>, Vec<f64>) {
    let model = MlpModel::init(dims, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..dims[0]).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
    let ys: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    (model, xs, ys)
}

#[test]
fn backprop_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let dims: &[usize] = if seed % 2 == 0 { &[6, 8, 1] } else { &[6, 64, 64, 1] };
        let (model, xs, ys) = random_instance(dims, seed);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let analytic = loss_and_gradients(&model, &refs, &ys).unwrap().1;
        let numeric = numeric_gradient(&model, &refs, &ys, 1e-5);
        worst = worst.max(max_rel_error(&analytic, &numeric));
    }
    assert!(worst <= 1e-4, "max relative gradient error {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn small_network_gradients(seed in any::<u64>(), width in 1usize..6, input in 1usize..5) {
        let (model, xs, ys) = random_instance(&[input, width, 1], seed);
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let analytic = loss_and_gradients(&model, &refs, &ys).unwrap().1;
        let numeric = numeric_gradient(&model, &refs, &ys, 1e-5);
        prop_assert!(max_rel_error(&analytic, &numeric) <= 1e-4);
    }
}

fn small_corpus() -> Vec<polyset::dataset::PolymerRecord> {
    generate_corpus(&DatasetConfig { n_groups: 40, chains_per_ensemble: 128, ..Default::default() }).unwrap()
}

#[test]
fn early_stopping_reports_minimum_and_is_deterministic() {
    let records = small_corpus();
    let split = split_records(&records, DEFAULT_FRACTIONS, 3, SplitUnit::Group).unwrap();
    let enc = EncoderConfig::default();
    let cfg = TrainConfig { max_epochs: 60, patience: 10, seed: 11, ..Default::default() };
    let mut seen = Vec::new();
    let a = train_with_observer(&records, EmbeddingKind::PolySet, &split, &enc, &cfg, |e, _, v| seen.push((e, v))).unwrap();
    let r = &a.report;
    assert_eq!(seen.len(), r.val_loss.len());
    assert_eq!(r.train_loss.len(), r.val_loss.len());
    let best = r.best_epoch.unwrap();
    let min = r.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(r.val_loss[best - 1], min);
    assert_eq!(r.best_val_loss, Some(min));
    assert!(min <= r.val_loss[0] + 1e-12);
    if r.val_loss.len() < cfg.max_epochs {
        assert_eq!(r.val_loss.len(), best + cfg.patience);
    }

    let b = train(&records, EmbeddingKind::PolySet, &split, &enc, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn zero_epoch_budget_keeps_initialization() {
    let records = small_corpus();
    let split = split_records(&records, DEFAULT_FRACTIONS, 0, SplitUnit::Group).unwrap();
    let enc = EncoderConfig::default();
    let cfg = TrainConfig { max_epochs: 0, seed: 5, ..Default::default() };
    let out = train(&records, EmbeddingKind::Baseline, &split, &enc, &cfg).unwrap();
    assert!(out.report.train_loss.is_empty() && out.report.val_loss.is_empty());
    assert_eq!(out.report.best_epoch, None);
    let fresh = MlpModel::init(out.model.layer_dims(), polyset::seed::derive(5, &[0])).unwrap();
    assert_eq!(out.model, fresh);
}

#[test]
fn empty_split_is_rejected() {
    let records = small_corpus();
    let mut split = split_records(&records, DEFAULT_FRACTIONS, 0, SplitUnit::Group).unwrap();
    split.val.clear();
    let err = train(&records, EmbeddingKind::PolySet, &split, &EncoderConfig::default(), &TrainConfig::default());
    assert!(matches!(err, Err(polyset::PolysetError::DegenerateSplit(_))));
}
