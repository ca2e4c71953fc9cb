//! Post-hoc evaluation of trained encoders: probing classifiers, fairness
//! gaps, trade-off sweeps, attribute-level accuracy differences, hub
//! graphs and embedding export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EvalConfig, ExperimentConfig};
use crate::data::{Splits, Standardizer};
use crate::game::{self, GridRow, TrainError, TrainState, WeightGrid, WeightKey};
use crate::nn::{accuracy, argmax_rows, softmax_cross_entropy, Activation, AdamState, Classifier, Matrix, MlpSpec, NnError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("class {class} is absent from the probe's training labels")]
    ClassAbsent { class: usize },
    #[error("no examples to evaluate")]
    Empty,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("undefined rate {rate}: group {group} has no {what}")]
    UndefinedRate { rate: &'static str, group: usize, what: &'static str },
    #[error("expected binary labels, found {0}")]
    NonBinary(usize),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Normal,
    Strong,
}

impl Capacity {
    pub fn name(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EodMode {
    /// Larger of the TPR and FPR gaps.
    Max,
    /// Mean of the two gaps.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Target,
    Residual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Target,
    Sensitive,
}

fn kind_name<T: Serialize>(v: T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSettings {
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl ProbeSettings {
    pub fn from_config(e: &EvalConfig) -> Self {
        Self {
            epochs: e.probe_epochs,
            hidden: e.probe_hidden.clone(),
            learning_rate: e.probe_learning_rate,
            weight_decay: e.probe_weight_decay,
            batch_size: e.probe_batch_size,
        }
    }

    /// Hidden layers for a capacity; the strong probe repeats the stack.
    pub fn hidden_for(&self, capacity: Capacity) -> Vec<usize> {
        match capacity {
            Capacity::Normal => self.hidden.clone(),
            Capacity::Strong => self.hidden.iter().chain(&self.hidden).copied().collect(),
        }
    }
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self::from_config(&EvalConfig::default())
    }
}

/// Labeled probe data for one split.
#[derive(Debug, Clone, Copy)]
pub struct ProbeData<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub embedding: EmbeddingKind,
    pub label: LabelKind,
    pub capacity: Capacity,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub chance_level: f64,
    /// Epoch (0-based) whose validation accuracy was selected.
    pub best_epoch: usize,
}

/// Accuracies of a trained probe, before it is attached to an embedding
/// and label kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeScores {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub chance: f64,
    pub best_epoch: usize,
}

/// Trains a fresh classifier on standardized `train` features and keeps
/// the parameters with the best validation accuracy (earliest on ties).
pub fn train_probe(
    train: ProbeData<'_>,
    val: ProbeData<'_>,
    test: ProbeData<'_>,
    n_classes: usize,
    capacity: Capacity,
    settings: &ProbeSettings,
    seed: u64,
) -> Result<ProbeScores, EvalError> {
    for (name, d) in [("train", &train), ("val", &val), ("test", &test)] {
        if d.x.nrows() != d.y.len() {
            return Err(EvalError::LengthMismatch(format!(
                "{name}: {} rows, {} labels",
                d.x.nrows(),
                d.y.len()
            )));
        }
        if d.x.ncols() != train.x.ncols() {
            return Err(EvalError::LengthMismatch(format!("{name}: {} columns", d.x.ncols())));
        }
    }
    if train.y.is_empty() || val.y.is_empty() || test.y.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut present = vec![false; n_classes];
    for &y in train.y.iter().chain(val.y).chain(test.y) {
        if y >= n_classes {
            return Err(NnError::LabelOutOfRange { row: 0, label: y, classes: n_classes }.into());
        }
    }
    for &y in train.y {
        present[y] = true;
    }
    if let Some(class) = present.iter().position(|p| !p) {
        return Err(EvalError::ClassAbsent { class });
    }

    let scaler = Standardizer::fit(train.x, (0..train.x.ncols()).collect());
    let prep = |x: &Matrix| {
        let mut x = x.clone();
        scaler.apply(&mut x);
        x
    };
    let (xt, xv, xs) = (prep(train.x), prep(val.x), prep(test.x));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = MlpSpec::new(xt.ncols(), settings.hidden_for(capacity), n_classes, Activation::Prelu);
    let mut probe = Classifier::new(spec, &mut rng)?;
    let mut adam = AdamState::new(probe.net.param_count(), settings.learning_rate, settings.weight_decay);
    let mut grads = vec![0.0; probe.net.param_count()];
    let mut best = (f64::NEG_INFINITY, 0, probe.net.params().to_vec());
    let mut order: Vec<usize> = (0..xt.nrows()).collect();
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        for rows in order.chunks(settings.batch_size.max(1)) {
            let x = xt.select(ndarray::Axis(0), rows);
            let y: Vec<usize> = rows.iter().map(|&r| train.y[r]).collect();
            let (logits, cache) = probe.net.forward::<ChaCha8Rng>(&x, None)?;
            let (_, g) = softmax_cross_entropy(&logits, &y)?;
            grads.iter_mut().for_each(|v| *v = 0.0);
            probe.net.backward(&cache, &g, &mut grads)?;
            adam.step(probe.net.params_mut(), &grads);
        }
        let acc = accuracy(&probe.predict_classes(&xv)?, val.y);
        if acc > best.0 {
            best = (acc, epoch, probe.net.params().to_vec());
        }
    }
    probe.net.params_mut().copy_from_slice(&best.2);
    Ok(ProbeScores {
        train: accuracy(&probe.predict_classes(&xt)?, train.y),
        val: best.0.max(0.0),
        test: accuracy(&probe.predict_classes(&xs)?, test.y),
        chance: 1.0 / n_classes as f64,
        best_epoch: best.1,
    })
}

/// Frozen (dropout-free) embeddings of every split.
#[derive(Debug, Clone)]
pub struct SplitEmbeddings {
    /// `(z_tar, z_res)` for train, val and test.
    pub parts: [(Matrix, Matrix); 3],
}

impl SplitEmbeddings {
    pub fn encode(state: &TrainState, splits: &Splits) -> Result<Self, EvalError> {
        let enc = |d: &crate::data::LabeledDataset| state.encoder.encode(&d.features);
        Ok(Self {
            parts: [enc(&splits.train)?, enc(&splits.val)?, enc(&splits.test)?],
        })
    }

    pub fn get(&self, split: usize, kind: EmbeddingKind) -> &Matrix {
        match kind {
            EmbeddingKind::Target => &self.parts[split].0,
            EmbeddingKind::Residual => &self.parts[split].1,
        }
    }
}

fn labels_of(ds: &crate::data::LabeledDataset, kind: LabelKind) -> &[usize] {
    match kind {
        LabelKind::Target => &ds.target_labels,
        LabelKind::Sensitive => &ds.sensitive_labels,
    }
}

pub const PROBE_COMBINATIONS: [(EmbeddingKind, LabelKind); 4] = [
    (EmbeddingKind::Target, LabelKind::Target),
    (EmbeddingKind::Target, LabelKind::Sensitive),
    (EmbeddingKind::Residual, LabelKind::Target),
    (EmbeddingKind::Residual, LabelKind::Sensitive),
];

/// The four probes (each embedding half against each label) at every
/// requested capacity. Probe seeds derive from `seed` and the probe index.
pub fn probe_suite(
    state: &TrainState,
    splits: &Splits,
    capacities: &[Capacity],
    settings: &ProbeSettings,
    seed: u64,
) -> Result<Vec<ProbeReport>, EvalError> {
    let emb = SplitEmbeddings::encode(state, splits)?;
    let sets = [&splits.train, &splits.val, &splits.test];
    let mut out = Vec::new();
    for &capacity in capacities {
        for (i, &(embedding, label)) in PROBE_COMBINATIONS.iter().enumerate() {
            let data = |s: usize| ProbeData {
                x: emb.get(s, embedding),
                y: labels_of(sets[s], label),
            };
            let n = match label {
                LabelKind::Target => splits.train.n_target_classes,
                LabelKind::Sensitive => splits.train.n_sensitive_classes,
            };
            let probe_seed = game::derive_seed(seed, 8 * (capacity as usize) + i);
            let s = train_probe(data(0), data(1), data(2), n, capacity, settings, probe_seed)?;
            out.push(ProbeReport {
                embedding,
                label,
                capacity,
                train_accuracy: s.train,
                val_accuracy: s.val,
                test_accuracy: s.test,
                chance_level: s.chance,
                best_epoch: s.best_epoch,
            });
        }
    }
    Ok(out)
}

pub fn find_probe(reports: &[ProbeReport], e: EmbeddingKind, l: LabelKind, c: Capacity) -> Option<&ProbeReport> {
    reports.iter().find(|r| r.embedding == e && r.label == l && r.capacity == c)
}

pub fn write_probe_csv<W: Write>(reports: &[ProbeReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "embedding", "label", "capacity", "train_acc", "val_acc", "test_acc", "chance", "best_epoch",
    ])?;
    for r in reports {
        w.write_record([
            kind_name(r.embedding),
            kind_name(r.label),
            r.capacity.name().to_string(),
            r.train_accuracy.to_string(),
            r.val_accuracy.to_string(),
            r.test_accuracy.to_string(),
            r.chance_level.to_string(),
            r.best_epoch.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub dp_gap: f64,
    pub eod_gap: f64,
    pub tpr_gap: f64,
    pub fpr_gap: f64,
    pub positive_rate: [f64; 2],
    pub tpr: [f64; 2],
    pub fpr: [f64; 2],
}

/// Demographic-parity and equalized-odds gaps of binary predictions
/// between the two sensitive groups.
pub fn fairness_gaps(predictions: &[usize], truths: &[usize], sensitive: &[usize], eod: EodMode) -> Result<FairnessReport, EvalError> {
    if predictions.len() != truths.len() || truths.len() != sensitive.len() {
        return Err(EvalError::LengthMismatch(format!(
            "{} predictions, {} truths, {} sensitive labels",
            predictions.len(),
            truths.len(),
            sensitive.len()
        )));
    }
    if let Some(&v) = predictions.iter().chain(truths).chain(sensitive).find(|&&v| v > 1) {
        return Err(EvalError::NonBinary(v));
    }
    // counts[group][truth][prediction]
    let mut counts = [[[0usize; 2]; 2]; 2];
    for ((&p, &t), &s) in predictions.iter().zip(truths).zip(sensitive) {
        counts[s][t][p] += 1;
    }
    let mut positive_rate = [0.0; 2];
    let mut tpr = [0.0; 2];
    let mut fpr = [0.0; 2];
    for g in 0..2 {
        let c = &counts[g];
        let total = c[0][0] + c[0][1] + c[1][0] + c[1][1];
        if total == 0 {
            return Err(EvalError::UndefinedRate { rate: "positive_rate", group: g, what: "examples" });
        }
        let (pos, neg) = (c[1][0] + c[1][1], c[0][0] + c[0][1]);
        if pos == 0 {
            return Err(EvalError::UndefinedRate { rate: "TPR", group: g, what: "positive examples" });
        }
        if neg == 0 {
            return Err(EvalError::UndefinedRate { rate: "FPR", group: g, what: "negative examples" });
        }
        positive_rate[g] = (c[0][1] + c[1][1]) as f64 / total as f64;
        tpr[g] = c[1][1] as f64 / pos as f64;
        fpr[g] = c[0][1] as f64 / neg as f64;
    }
    // |a/b - c/d| from the counts, rounded once.
    let gap = |a: usize, b: usize, c: usize, d: usize| {
        let (x, y) = ((a * d) as u128, (c * b) as u128);
        x.abs_diff(y) as f64 / (b as u128 * d as u128) as f64
    };
    let [g0, g1] = counts;
    let total = |c: &[[usize; 2]; 2]| c[0][0] + c[0][1] + c[1][0] + c[1][1];
    let dp_gap = gap(g0[0][1] + g0[1][1], total(&g0), g1[0][1] + g1[1][1], total(&g1));
    let tpr_gap = gap(g0[1][1], g0[1][0] + g0[1][1], g1[1][1], g1[1][0] + g1[1][1]);
    let fpr_gap = gap(g0[0][1], g0[0][0] + g0[0][1], g1[0][1], g1[0][0] + g1[0][1]);
    Ok(FairnessReport {
        dp_gap,
        eod_gap: match eod {
            EodMode::Max => tpr_gap.max(fpr_gap),
            EodMode::Mean => 0.5 * (tpr_gap + fpr_gap),
        },
        tpr_gap,
        fpr_gap,
        positive_rate,
        tpr,
        fpr,
    })
}

/// Fairness of the trained target predictor on the test split, when both
/// the target and the sensitive attribute are binary.
pub fn model_fairness(state: &TrainState, splits: &Splits, eod: EodMode) -> Result<Option<FairnessReport>, EvalError> {
    let test = &splits.test;
    if test.n_target_classes != 2 || test.n_sensitive_classes != 2 {
        return Ok(None);
    }
    let (z_tar, _) = state.encoder.encode(&test.features)?;
    let pred = state.target_predictor.predict_classes(&z_tar)?;
    fairness_gaps(&pred, &test.target_labels, &test.sensitive_labels, eod).map(Some)
}

/// Headline numbers of one trained run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEvaluation {
    /// Normal-capacity probe test accuracy for the target label on `z_tar`.
    pub target_accuracy: f64,
    /// Normal-capacity (or first configured capacity) probe test accuracy
    /// for the sensitive label on `z_tar`.
    pub adversarial_accuracy: f64,
    pub probes: Vec<ProbeReport>,
    pub fairness: Option<FairnessReport>,
}

pub fn evaluate_run(config: &ExperimentConfig, splits: &Splits, state: &TrainState) -> Result<RunEvaluation, EvalError> {
    let settings = ProbeSettings::from_config(&config.eval);
    let probes = probe_suite(state, splits, &config.eval.capacities, &settings, config.seed)?;
    let capacity = if config.eval.capacities.contains(&Capacity::Normal) {
        Capacity::Normal
    } else {
        config.eval.capacities[0]
    };
    let pick = |l| {
        find_probe(&probes, EmbeddingKind::Target, l, capacity)
            .map(|r| r.test_accuracy)
            .unwrap_or(f64::NAN)
    };
    let fairness = if config.eval.fairness {
        model_fairness(state, splits, config.eval.eod)?
    } else {
        None
    };
    Ok(RunEvaluation {
        target_accuracy: pick(LabelKind::Target),
        adversarial_accuracy: pick(LabelKind::Sensitive),
        probes,
        fairness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub seed: u64,
    pub target_accuracy: f64,
    pub adversarial_accuracy: f64,
    pub error: Option<String>,
}

/// One train and probe per sensitive-adversary weight; rows sorted by
/// weight (stable, duplicates kept).
pub fn tradeoff_sweep(config: &ExperimentConfig, splits: &Splits, beta_grid: &[f64], parallel: usize) -> Result<Vec<CurvePoint>, TrainError> {
    let rows = game::run_grid(config, splits, &WeightGrid::single(WeightKey::BetaS, beta_grid.to_vec()), parallel)?;
    let mut curve: Vec<CurvePoint> = rows.iter().map(curve_point).collect();
    curve.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    Ok(curve)
}

fn curve_point(r: &GridRow) -> CurvePoint {
    CurvePoint {
        beta: r.weights.beta_s_adv,
        seed: r.seed,
        target_accuracy: r.target_accuracy,
        adversarial_accuracy: r.adversarial_accuracy,
        error: r.error.clone(),
    }
}

pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta_S", "seed", "target_acc", "adversarial_acc", "error"])?;
    for p in curve {
        w.write_record([
            p.beta.to_string(),
            p.seed.to_string(),
            p.target_accuracy.to_string(),
            p.adversarial_accuracy.to_string(),
            p.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// An auxiliary attribute with labels for the train, val and test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub labels: [Vec<usize>; 3],
}

impl Attribute {
    pub fn n_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(1, |m| m + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaAccuracy {
    pub attribute: String,
    pub acc_target_embedding: f64,
    pub acc_residual_embedding: f64,
    pub delta: f64,
    /// Test frequency of the most common class.
    pub majority_frequency: f64,
    /// Accuracy minus majority-class frequency.
    pub normalized_target_embedding: f64,
    pub normalized_residual_embedding: f64,
}

/// Probe accuracy on `z_tar` minus probe accuracy on `z_res`, per attribute.
pub fn delta_accuracy(
    state: &TrainState,
    splits: &Splits,
    attributes: &[Attribute],
    settings: &ProbeSettings,
    seed: u64,
) -> Result<Vec<DeltaAccuracy>, EvalError> {
    if attributes.is_empty() {
        return Err(EvalError::Empty);
    }
    let emb = SplitEmbeddings::encode(state, splits)?;
    let mut out = Vec::new();
    for (i, attr) in attributes.iter().enumerate() {
        let n = attr.n_classes();
        let mut acc = [0.0; 2];
        for (j, kind) in [EmbeddingKind::Target, EmbeddingKind::Residual].into_iter().enumerate() {
            let data = |s: usize| ProbeData {
                x: emb.get(s, kind),
                y: &attr.labels[s],
            };
            let s = train_probe(data(0), data(1), data(2), n, Capacity::Normal, settings, game::derive_seed(seed, 2 * i + j))?;
            acc[j] = s.test;
        }
        let test = &attr.labels[2];
        let mut counts = vec![0usize; n];
        test.iter().for_each(|&y| counts[y] += 1);
        let majority = *counts.iter().max().unwrap_or(&0) as f64 / test.len().max(1) as f64;
        out.push(DeltaAccuracy {
            attribute: attr.name.clone(),
            acc_target_embedding: acc[0],
            acc_residual_embedding: acc[1],
            delta: acc[0] - acc[1],
            majority_frequency: majority,
            normalized_target_embedding: acc[0] - majority,
            normalized_residual_embedding: acc[1] - majority,
        });
    }
    Ok(out)
}

/// The dataset's own target and sensitive labels as attributes.
pub fn label_attributes(splits: &Splits) -> Vec<Attribute> {
    let parts = [&splits.train, &splits.val, &splits.test];
    vec![
        Attribute {
            name: "target".into(),
            labels: parts.map(|d| d.target_labels.clone()),
        },
        Attribute {
            name: "sensitive".into(),
            labels: parts.map(|d| d.sensitive_labels.clone()),
        },
    ]
}

pub fn write_delta_csv<W: Write>(rows: &[DeltaAccuracy], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "attribute",
        "acc_z_tar",
        "acc_z_res",
        "delta",
        "majority_frequency",
        "acc_minus_majority_z_tar",
        "acc_minus_majority_z_res",
    ])?;
    for r in rows {
        w.write_record([
            r.attribute.clone(),
            r.acc_target_embedding.to_string(),
            r.acc_residual_embedding.to_string(),
            r.delta.to_string(),
            r.majority_frequency.to_string(),
            r.normalized_target_embedding.to_string(),
            r.normalized_residual_embedding.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Directed graph over sensitive classes: `u -> v` when an example of
/// class `u` is predicted as `v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubGraph {
    pub n_classes: usize,
    /// Edge multiplicities.
    pub edges: BTreeMap<(usize, usize), usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubStats {
    pub average_out_degree: f64,
    pub distinct_edges: usize,
    /// `histogram[d]` = number of nodes with distinct in-degree `d`.
    pub in_degree_histogram: Vec<usize>,
    pub hub_threshold: usize,
    pub hubs: Vec<usize>,
}

impl HubGraph {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self, EvalError> {
        if truth.len() != predicted.len() {
            return Err(EvalError::LengthMismatch(format!("{} truths, {} predictions", truth.len(), predicted.len())));
        }
        let mut edges = BTreeMap::new();
        for (&u, &v) in truth.iter().zip(predicted) {
            if u >= n_classes || v >= n_classes {
                return Err(NnError::LabelOutOfRange { row: 0, label: u.max(v), classes: n_classes }.into());
            }
            *edges.entry((u, v)).or_insert(0) += 1;
        }
        Ok(Self { n_classes, edges })
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_classes];
        self.edges.keys().for_each(|&(_, v)| d[v] += 1);
        d
    }

    pub fn stats(&self, hub_threshold: usize) -> HubStats {
        let in_deg = self.in_degrees();
        let mut histogram = vec![0; self.n_classes + 1];
        in_deg.iter().for_each(|&d| histogram[d] += 1);
        HubStats {
            average_out_degree: self.edges.len() as f64 / self.n_classes as f64,
            distinct_edges: self.edges.len(),
            in_degree_histogram: histogram,
            hub_threshold,
            hubs: (0..self.n_classes).filter(|&v| in_deg[v] >= hub_threshold).collect(),
        }
    }
}

/// Hub graph of the training-time sensitive adversary on `z_tar`.
pub fn hub_graph(state: &TrainState, dataset: &crate::data::LabeledDataset) -> Result<HubGraph, EvalError> {
    let logits = state.adversary_logits(&dataset.features)?;
    HubGraph::from_predictions(&dataset.sensitive_labels, &argmax_rows(&logits), dataset.n_sensitive_classes)
}

pub fn write_hub_csv<W: Write>(graph: &HubGraph, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source", "target", "count"])?;
    for (&(u, v), &c) in &graph.edges {
        w.write_record([u.to_string(), v.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per example of every split:
/// `example_id, split, target_label, sensitive_label, z_tar_*, z_res_*`.
pub fn write_embeddings<W: Write>(state: &TrainState, splits: &Splits, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let (dt, dr) = (state.encoder.target_dim(), state.encoder.residual_dim());
    let mut header: Vec<String> = ["example_id", "split", "target_label", "sensitive_label"].map(String::from).to_vec();
    header.extend((0..dt).map(|i| format!("z_tar_{i}")));
    header.extend((0..dr).map(|i| format!("z_res_{i}")));
    w.write_record(&header)?;
    for (name, ds) in splits.named() {
        let (zt, zr) = state.encoder.encode(&ds.features)?;
        for r in 0..ds.len() {
            let mut rec = vec![
                ds.ids[r].to_string(),
                name.to_string(),
                ds.target_labels[r].to_string(),
                ds.sensitive_labels[r].to_string(),
            ];
            rec.extend(zt.row(r).iter().chain(zr.row(r).iter()).map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|source| EvalError::Io {
        path: "<embeddings>".into(),
        source,
    })?;
    Ok(())
}

pub fn export_embeddings(state: &TrainState, splits: &Splits, path: &Path) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let f = std::fs::File::create(path).map_err(io)?;
    write_embeddings(state, splits, std::io::BufWriter::new(f))
}
