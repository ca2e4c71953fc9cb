use focal_core::config::prepare_splits;
use focal_core::eval::{
    delta_accuracy, fairness_gaps, hub_graph, probe_suite, tradeoff_sweep, train_probe, write_embeddings, Attribute,
    Capacity, EodMode, EvalError, ProbeData, ProbeSettings,
};
use focal_core::game::{derive_seed, run_point, train};
use focal_core::{ExperimentConfig, Matrix, Splits, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trained() -> (ExperimentConfig, Splits, TrainState) {
    let cfg = ExperimentConfig::from_json(
        r#"{
        "seed": 9,
        "dataset": {"synthetic": {"n_super": 3, "n_sub_per_super": 2, "dim": 6, "samples_per_sub": 30}},
        "architecture": {"trunk_hidden": [16], "trunk_width": 12, "embedding_dim": 4, "target_dim": 3, "classifier_hidden": [8]},
        "game": {"schedule": {"warmup_epochs": 2, "burnin_epochs": 2, "batch_size": 32}},
        "eval": {"probe_epochs": 4, "probe_hidden": [8]}
    }"#,
    )
    .unwrap();
    let splits = prepare_splits(&cfg).unwrap();
    let state = train(&cfg, &splits.train).unwrap();
    (cfg, splits, state)
}

fn one_hot(labels: &[usize], n: usize) -> Matrix {
    Matrix::from_shape_fn((labels.len(), n), |(r, c)| f64::from(labels[r] == c))
}

fn uniform_labels(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..n)).collect()
}

fn settings(epochs: usize) -> ProbeSettings {
    ProbeSettings {
        epochs,
        hidden: vec![32],
        ..ProbeSettings::default()
    }
}

#[test]
fn probe_reads_a_one_hot_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ys: Vec<Vec<usize>> = [600, 200, 200].iter().map(|&n| uniform_labels(&mut rng, n, 10)).collect();
    let xs: Vec<Matrix> = ys.iter().map(|y| one_hot(y, 10)).collect();
    let d = |i: usize| ProbeData { x: &xs[i], y: &ys[i] };
    let s = train_probe(d(0), d(1), d(2), 10, Capacity::Normal, &settings(30), 3).unwrap();
    assert!(s.test >= 0.99, "test accuracy {}", s.test);
    assert!((s.chance - 0.1).abs() < 0.05);
}

#[test]
fn probe_on_noise_stays_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sizes = [2000, 500, 5000];
    let ys: Vec<Vec<usize>> = sizes.iter().map(|&n| uniform_labels(&mut rng, n, 100)).collect();
    let xs: Vec<Matrix> = sizes
        .iter()
        .map(|&n| Matrix::from_shape_fn((n, 8), |_| rng.random_range(-1.0..1.0)))
        .collect();
    let d = |i: usize| ProbeData { x: &xs[i], y: &ys[i] };
    let s = train_probe(d(0), d(1), d(2), 100, Capacity::Normal, &settings(20), 4).unwrap();
    let se = (0.01f64 * 0.99 / sizes[2] as f64).sqrt();
    assert!((s.test - 0.01).abs() <= 3.0 * se, "test accuracy {} (3 SE = {})", s.test, 3.0 * se);
}

#[test]
fn probe_with_shuffled_labels_is_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sizes = [1500, 300, 3000];
    let xs: Vec<Matrix> = sizes.iter().map(|&n| one_hot(&uniform_labels(&mut rng, n, 10), 10)).collect();
    let shuffled: Vec<Vec<usize>> = sizes.iter().map(|&n| uniform_labels(&mut rng, n, 10)).collect();
    let d = |i: usize| ProbeData { x: &xs[i], y: &shuffled[i] };
    let s = train_probe(d(0), d(1), d(2), 10, Capacity::Normal, &settings(20), 5).unwrap();
    let se = (0.1f64 * 0.9 / sizes[2] as f64).sqrt();
    assert!((s.test - 0.1).abs() <= 3.0 * se, "test accuracy {}", s.test);
}

#[test]
fn probe_suite_leaves_the_model_alone() {
    let (cfg, splits, state) = trained();
    let before = state.clone();
    let s = ProbeSettings::from_config(&cfg.eval);
    let caps = [Capacity::Normal, Capacity::Strong];
    let a = probe_suite(&state, &splits, &caps, &s, 1).unwrap();
    let b = probe_suite(&state, &splits, &caps, &s, 1).unwrap();
    assert_eq!(state, before);
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
    assert_eq!(a.iter().filter(|r| r.capacity == Capacity::Strong).count(), 4);
}

#[test]
fn fairness_gaps_of_a_hand_table() {
    let truth = [1, 1, 0, 0, 0, 0, 1, 0];
    let pred = [1, 0, 1, 0, 0, 0, 1, 0];
    let sens = [0, 0, 0, 0, 0, 0, 1, 1];
    let r = fairness_gaps(&pred, &truth, &sens, EodMode::Max).unwrap();
    assert_eq!(r.tpr, [0.5, 1.0]);
    assert_eq!(r.fpr, [0.25, 0.0]);
    assert!((r.dp_gap - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!((r.tpr_gap, r.fpr_gap, r.eod_gap), (0.5, 0.25, 0.5));
    assert_eq!(fairness_gaps(&pred, &truth, &sens, EodMode::Mean).unwrap().eod_gap, 0.375);

    let swapped: Vec<usize> = sens.iter().map(|s| 1 - s).collect();
    let w = fairness_gaps(&pred, &truth, &swapped, EodMode::Max).unwrap();
    assert_eq!((w.dp_gap, w.eod_gap), (r.dp_gap, r.eod_gap));

    let err = fairness_gaps(&[1, 1], &[1, 1], &[0, 1], EodMode::Max).unwrap_err();
    assert!(matches!(err, EvalError::UndefinedRate { rate: "FPR", .. }));
}

#[test]
fn hub_graph_covers_every_example() {
    let (_, splits, state) = trained();
    let g = hub_graph(&state, &splits.test).unwrap();
    assert_eq!(g.edges.values().sum::<usize>(), splits.test.len());
    let st = g.stats(2);
    assert!(st.average_out_degree >= 1.0 / g.n_classes as f64);
    assert_eq!(st.in_degree_histogram.iter().sum::<usize>(), g.n_classes);
}

#[test]
fn embedding_export_shape_and_bytes() {
    let (cfg, splits, state) = trained();
    let mut a = Vec::new();
    write_embeddings(&state, &splits, &mut a).unwrap();
    let mut rdr = csv::Reader::from_reader(&a[..]);
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.len(), 4 + 3 + 4);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), splits.train.len() + splits.val.len() + splits.test.len());
    assert!(rows.iter().all(|r| r.len() == header.len()));

    let again = train(&cfg, &splits.train).unwrap();
    let mut b = Vec::new();
    write_embeddings(&again, &splits, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn delta_of_a_constant_attribute_is_zero() {
    let (cfg, splits, state) = trained();
    let attr = Attribute {
        name: "constant".into(),
        labels: [vec![0; splits.train.len()], vec![0; splits.val.len()], vec![0; splits.test.len()]],
    };
    let d = delta_accuracy(&state, &splits, &[attr], &ProbeSettings::from_config(&cfg.eval), 2).unwrap();
    assert_eq!(
        (d[0].acc_target_embedding, d[0].acc_residual_embedding, d[0].delta),
        (1.0, 1.0, 0.0)
    );
    assert_eq!(d[0].majority_frequency, 1.0);
}

#[test]
fn tradeoff_keeps_duplicates_and_matches_direct_runs() {
    let (cfg, splits, _) = trained();
    let curve = tradeoff_sweep(&cfg, &splits, &[0.5, 0.0, 0.5], 2).unwrap();
    let betas: Vec<f64> = curve.iter().map(|c| c.beta).collect();
    assert_eq!(betas, [0.0, 0.5, 0.5]);
    let seeds: Vec<u64> = curve.iter().map(|c| c.seed).collect();
    assert_eq!(seeds, [1, 0, 2].map(|i| derive_seed(cfg.seed, i)));

    let single = tradeoff_sweep(&cfg, &splits, &[1.5], 1).unwrap();
    let mut direct = cfg.clone();
    direct.game.weights.beta_s_adv = 1.5;
    direct.seed = derive_seed(cfg.seed, 0);
    let row = run_point(&direct, &splits, 0);
    assert_eq!(single[0].target_accuracy, row.target_accuracy);
    assert_eq!(single[0].adversarial_accuracy, row.adversarial_accuracy);
}
