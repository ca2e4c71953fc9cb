use focal_core::config::prepare_splits;
use focal_core::entropy::compute_tau;
use focal_core::game::{
    adversary_step, burnin_epoch, derive_seed, encoder_step, grid_search, run_grid, run_point, train, train_with, warmup_epoch, Batch,
    PartitionTable, WeightGrid,
};
use focal_core::similarity::LabelGrouping;
use focal_core::{ClassPartition, ExperimentConfig, GameWeights, SanitizationMode, Splits, TrainState};

fn config(n_super: usize, seed: u64) -> ExperimentConfig {
    let text = format!(
        r#"{{
        "seed": {seed},
        "dataset": {{"synthetic": {{"n_super": {n_super}, "n_sub_per_super": 2, "dim": 6, "samples_per_sub": 30}}}},
        "architecture": {{"trunk_hidden": [16], "trunk_width": 12, "embedding_dim": 4, "classifier_hidden": [8]}},
        "game": {{"schedule": {{"warmup_epochs": 2, "burnin_epochs": 3, "batch_size": 32}}}},
        "eval": {{"probe_epochs": 4, "probe_hidden": [8]}}
    }}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn setup(n_super: usize) -> (ExperimentConfig, Splits) {
    let cfg = config(n_super, 5);
    let splits = prepare_splits(&cfg).unwrap();
    (cfg, splits)
}

fn predictor_params(s: &TrainState) -> Vec<f64> {
    let mut p = s.encoder_params();
    p.extend_from_slice(s.target_predictor.net.params());
    p.extend_from_slice(s.sensitive_predictor.net.params());
    p
}

#[test]
fn training_is_deterministic() {
    let (cfg, splits) = setup(3);
    let a = train(&cfg, &splits.train).unwrap();
    let b = train(&cfg, &splits.train).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.history.len(), 5);

    let mut other = cfg.clone();
    other.seed = 6;
    let c = train(&other, &splits.train).unwrap();
    assert_ne!(a.encoder_params(), c.encoder_params());
}

#[test]
fn balanced_grouping_makes_focal_match_maxent() {
    let (mut cfg, splits) = setup(2);
    cfg.game.sanitization = SanitizationMode::FocalKlTau;
    let focal = train(&cfg, &splits.train).unwrap();
    cfg.game.sanitization = SanitizationMode::MaxentUniform;
    let maxent = train(&cfg, &splits.train).unwrap();
    for (f, m) in focal.history.iter().zip(&maxent.history) {
        assert_eq!(f.phase, m.phase);
        for (a, b) in [(f.loss_total, m.loss_total), (f.loss_adv_s, m.loss_adv_s), (f.loss_target, m.loss_target)] {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }
    let drift = focal
        .encoder_params()
        .iter()
        .zip(maxent.encoder_params())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-9, "parameter drift {drift}");
}

#[test]
fn zero_adversary_weights_reduce_burnin_to_warmup() {
    let (mut cfg, splits) = setup(3);
    cfg.game.weights.beta_s_adv = 0.0;
    cfg.game.weights.beta_t_adv = 0.0;
    let mixed = train(&cfg, &splits.train).unwrap();
    cfg.game.schedule.warmup_epochs = 5;
    cfg.game.schedule.burnin_epochs = 0;
    let pure = train(&cfg, &splits.train).unwrap();
    assert_eq!(predictor_params(&mixed), predictor_params(&pure));
    for (a, b) in mixed.history.iter().zip(&pure.history) {
        assert_eq!(a.loss_target, b.loss_target);
        assert_eq!(a.loss_sensitive, b.loss_sensitive);
    }
}

#[test]
fn phases_touch_only_their_networks() {
    let (cfg, splits) = setup(3);
    let ds = &splits.train;
    let mut state = TrainState::new(&cfg, ds.dim(), ds.n_target_classes, ds.n_sensitive_classes).unwrap();

    let adv = state.adversary_params();
    let enc = state.encoder_params();
    let m = warmup_epoch(&mut state, ds, &cfg.game.weights, 32).unwrap();
    assert_eq!(state.adversary_params(), adv);
    assert_ne!(state.encoder_params(), enc);
    assert_eq!((m.loss_adv_t, m.loss_adv_s), (0.0, 0.0));

    let rows: Vec<usize> = (0..32).collect();
    let batch = Batch::from_rows(ds, &rows);
    let before = predictor_params(&state);
    let adv = state.adversary_params();
    adversary_step(&mut state, &batch).unwrap();
    assert_eq!(predictor_params(&state), before);
    assert_ne!(state.adversary_params(), adv);

    let table = PartitionTable::from_labels(ds.grouping.as_ref().unwrap()).unwrap();
    let adv = state.adversary_params();
    encoder_step(&mut state, &batch, &cfg.game.weights, cfg.game.sanitization, &table.targets_for(&batch), true).unwrap();
    assert_eq!(state.adversary_params(), adv);
}

#[test]
fn logged_total_is_the_weighted_sum() {
    let (mut cfg, splits) = setup(3);
    cfg.game.weights = GameWeights {
        alpha_t: 0.7,
        alpha_s: 1.3,
        beta_t_adv: 0.4,
        beta_s_adv: 2.5,
        recon: 0.2,
    };
    let state = train(&cfg, &splits.train).unwrap();
    let w = cfg.game.weights;
    for m in &state.history {
        let sum = w.alpha_t * m.loss_target
            + w.alpha_s * m.loss_sensitive
            + w.beta_t_adv * m.loss_adv_t
            + w.beta_s_adv * m.loss_adv_s
            + w.recon * m.loss_recon;
        assert!((m.loss_total - sum).abs() <= 1e-9 * sum.abs().max(1.0), "{} vs {sum}", m.loss_total);
        assert!(m.loss_recon > 0.0);
    }
}

#[test]
fn encoder_step_reports_the_focal_loss_of_the_frozen_adversary() {
    let (cfg, splits) = setup(3);
    let ds = &splits.train;
    let mut state = train(&cfg, ds).unwrap();
    let rows: Vec<usize> = (0..20).collect();
    let batch = Batch::from_rows(ds, &rows);
    let grouping: &LabelGrouping = ds.grouping.as_ref().unwrap();

    let (z_tar, _) = state.encoder.encode(&batch.features).unwrap();
    let logits = state.sensitive_adversary.net.predict(&z_tar).unwrap();
    let mut expected = 0.0;
    for (r, &s) in batch.sensitive.iter().enumerate() {
        let similar: Vec<usize> = (0..grouping.n_classes())
            .filter(|&c| grouping.group_of(c) == grouping.group_of(s))
            .collect();
        let t = compute_tau(&ClassPartition::new(grouping.n_classes(), similar).unwrap()).unwrap();
        let row = logits.row(r);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        expected += t.tau.values().iter().zip(row).map(|(q, l)| (l - lse).exp() * (l - lse - q.ln())).sum::<f64>();
    }
    expected /= rows.len() as f64;

    let table = PartitionTable::from_labels(grouping).unwrap();
    let l = encoder_step(&mut state, &batch, &cfg.game.weights, SanitizationMode::FocalKlTau, &table.targets_for(&batch), true)
        .unwrap();
    assert!((l.adv_s - expected).abs() <= 1e-9, "{} vs {expected}", l.adv_s);
}

#[test]
fn checkpoint_round_trip_resumes_identically() {
    let (cfg, splits) = setup(3);
    let mut snapshot = None;
    let full = train_with(&cfg, &splits.train, |s| {
        if s.epoch == 3 {
            snapshot = Some(serde_json::to_string(s).unwrap());
        }
    })
    .unwrap();
    let mut restored: TrainState = serde_json::from_str(&snapshot.unwrap()).unwrap();
    assert_eq!(restored.epoch, 3);
    assert_eq!(restored.history[..], full.history[..3]);
    let table = PartitionTable::from_labels(splits.train.grouping.as_ref().unwrap()).unwrap();
    let g = &cfg.game;
    while restored.epoch < full.epoch {
        burnin_epoch(&mut restored, &splits.train, &g.weights, &g.schedule, g.sanitization, &table).unwrap();
    }
    assert_eq!(restored, full);

    let reparsed: TrainState = serde_json::from_str(&serde_json::to_string(&full).unwrap()).unwrap();
    assert_eq!(reparsed, full);
}

#[test]
fn grid_points_use_derived_seeds() {
    let (cfg, splits) = setup(3);
    let grid = WeightGrid::parse("beta_S=0,1.5").unwrap();
    let rows = run_grid(&cfg, &splits, &grid, 1).unwrap();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row.seed, derive_seed(cfg.seed, row.index));
        assert!(row.error.is_none(), "{:?}", row.error);
    }

    let mut direct = cfg.clone();
    direct.game.weights.beta_s_adv = 1.5;
    direct.seed = derive_seed(cfg.seed, 1);
    assert_eq!(run_point(&direct, &splits, 1), rows[1]);
}

#[test]
fn parallel_grid_matches_serial() {
    let (cfg, splits) = setup(3);
    let grid = WeightGrid::parse("beta_S=0,1;alpha_S=0.5,1").unwrap();
    let serial = grid_search(&cfg, &splits, &grid, 1).unwrap();
    let parallel = grid_search(&cfg, &splits, &grid, 3).unwrap();
    assert_eq!(serial.len(), 4);
    assert_eq!(serial, parallel);
    assert!(serial.windows(2).all(|w| w[0].ratio >= w[1].ratio));
}

#[test]
fn sanitization_alone_descends_on_a_fixed_batch() {
    let (cfg, splits) = setup(3);
    let ds = &splits.train;
    let mut state = train(&cfg, ds).unwrap();
    let weights = GameWeights {
        alpha_t: 0.0,
        alpha_s: 0.0,
        beta_t_adv: 0.0,
        beta_s_adv: 10.0,
        recon: 0.0,
    };
    let rows: Vec<usize> = (0..64).collect();
    let batch = Batch::from_rows(ds, &rows);
    let table = PartitionTable::from_labels(ds.grouping.as_ref().unwrap()).unwrap();
    let adv = state.adversary_params();
    let losses: Vec<f64> = (0..51)
        .map(|_| {
            encoder_step(&mut state, &batch, &weights, SanitizationMode::FocalKlTau, &table.targets_for(&batch), true)
                .unwrap()
                .adv_s
        })
        .collect();
    assert_eq!(state.adversary_params(), adv);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
    assert!(losses[50] < losses[0]);
}
