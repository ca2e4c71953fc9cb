//! The four-player training game.
//!
//! The encoder and the two predictors minimize
//!
//! ```text
//! alpha_t CE(t | z_tar) + alpha_s CE(s | z_res)
//!   + beta_t_adv KL(adv_t(z_res) || U) + beta_s_adv L_focal(adv_s(z_tar), tau(x))
//!   + recon MSE(dec(z_tar, z_res), x)
//! ```
//!
//! against frozen adversaries, while the adversaries themselves minimize
//! cross-entropy on the true labels from frozen embeddings. Training runs a
//! warm-up phase (predictors only) followed by a burn-in phase in which each
//! minibatch gets `adversary_steps` adversary updates and one encoder update.

use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::{concatenate, s, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::data::{LabeledDataset, Splits};
use crate::entropy::{compute_tau, EntropyError, FocalTarget, LogitVector};
use crate::eval::{self, EvalError};
use crate::nn::{
    accuracy, argmax_rows, entropy_to_uniform_loss, focal_sanitize_loss, mse_reconstruction_loss,
    softmax_cross_entropy, AdamState, Classifier, FocalMode, Matrix, Mlp, NnError, SplitEncoder,
};
use crate::similarity::{partition_from_labels, partition_from_model, LabelGrouping};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Partition(#[from] EntropyError),
    #[error("dataset mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite loss in {phase} epoch {epoch}, batch {batch}")]
    Divergence { phase: Phase, epoch: usize, batch: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("empty grid")]
    EmptyGrid,
}

/// Weights of the five objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameWeights {
    pub alpha_t: f64,
    pub alpha_s: f64,
    pub beta_t_adv: f64,
    pub beta_s_adv: f64,
    pub recon: f64,
}

impl Default for GameWeights {
    fn default() -> Self {
        Self {
            alpha_t: 1.0,
            alpha_s: 1.0,
            beta_t_adv: 1.0,
            beta_s_adv: 1.0,
            recon: 0.0,
        }
    }
}

impl GameWeights {
    pub(crate) fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, v) in [
            ("alpha_t", self.alpha_t),
            ("alpha_s", self.alpha_s),
            ("beta_t_adv", self.beta_t_adv),
            ("beta_s_adv", self.beta_s_adv),
            ("recon", self.recon),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn without_adversaries(self) -> Self {
        Self {
            beta_t_adv: 0.0,
            beta_s_adv: 0.0,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub warmup_epochs: usize,
    pub burnin_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adversary_steps: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            warmup_epochs: 10,
            burnin_epochs: 20,
            batch_size: 128,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            adversary_steps: 1,
        }
    }
}

impl TrainSchedule {
    pub(crate) fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.batch_size == 0 {
            return Err(("batch_size", "must be >= 1".into()));
        }
        if self.adversary_steps == 0 {
            return Err(("adversary_steps", "must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(("learning_rate", "must be finite and >= 0".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(("weight_decay", "must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// What the encoder pushes the sensitive adversary's output towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SanitizationMode {
    /// `KL(adv_s || tau)` with a per-example peak.
    FocalKlTau,
    /// Within-group KL to uniform for the two class groups.
    FocalSplit,
    /// `KL(adv_s || U)`
    MaxentUniform,
}

impl SanitizationMode {
    pub fn focal(self) -> Option<FocalMode> {
        match self {
            Self::FocalKlTau => Some(FocalMode::KlTau),
            Self::FocalSplit => Some(FocalMode::Split),
            Self::MaxentUniform => None,
        }
    }
}

/// Where per-example similar/dissimilar partitions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionMode {
    /// Classes sharing the example's label group.
    Labels,
    /// The `k` top classes of the current sensitive adversary, refreshed
    /// once per burn-in epoch.
    ModelTopk { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Burnin,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Warmup => "warmup",
            Phase::Burnin => "burnin",
        })
    }
}

/// One row of the metrics log. Losses are unweighted per-term means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub phase: Phase,
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_target: f64,
    pub loss_sensitive: f64,
    pub loss_adv_t: f64,
    pub loss_adv_s: f64,
    pub loss_recon: f64,
    pub acc_target_train: f64,
    pub acc_sensitive_adv_train: f64,
}

pub const METRICS_HEADER: [&str; 10] = [
    "phase",
    "epoch",
    "loss_total",
    "loss_target",
    "loss_sensitive",
    "loss_adv_T",
    "loss_adv_S",
    "loss_recon",
    "acc_target_train",
    "acc_sensitive_adv_train",
];

/// Losses of one encoder step; `total` is the weighted sum of the others.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EncoderLosses {
    pub total: f64,
    pub target: f64,
    pub sensitive: f64,
    pub adv_t: f64,
    pub adv_s: f64,
    pub recon: f64,
    pub target_accuracy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdversaryLosses {
    pub sensitive: f64,
    pub target: f64,
    pub sensitive_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub trunk: AdamState,
    pub target_head: AdamState,
    pub residual_head: AdamState,
    pub target_predictor: AdamState,
    pub sensitive_predictor: AdamState,
    pub target_adversary: AdamState,
    pub sensitive_adversary: AdamState,
    pub decoder: Option<AdamState>,
}

/// Every network, optimizer and the training RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub encoder: SplitEncoder,
    /// `z_tar -> target`
    pub target_predictor: Classifier,
    /// `z_res -> sensitive`
    pub sensitive_predictor: Classifier,
    /// `z_res -> target`
    pub target_adversary: Classifier,
    /// `z_tar -> sensitive`
    pub sensitive_adversary: Classifier,
    pub decoder: Option<Mlp>,
    pub optim: Optimizers,
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: &ExperimentConfig, input_dim: usize, n_target: usize, n_sensitive: usize) -> Result<Self, TrainError> {
        let arch = &config.architecture;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = SplitEncoder::new(&arch.encoder_spec(input_dim), &mut rng)?;
        let (dt, dr) = (arch.target_dim(), arch.residual_dim());
        let target_predictor = Classifier::new(arch.classifier_spec(dt, n_target), &mut rng)?;
        let sensitive_predictor = Classifier::new(arch.classifier_spec(dr, n_sensitive), &mut rng)?;
        let target_adversary = Classifier::new(arch.classifier_spec(dr, n_target), &mut rng)?;
        let sensitive_adversary = Classifier::new(arch.classifier_spec(dt, n_sensitive), &mut rng)?;
        let decoder = if config.game.weights.recon > 0.0 {
            Some(Mlp::new(arch.decoder_spec(input_dim), &mut rng)?)
        } else {
            None
        };
        let sch = &config.game.schedule;
        let adam = |n: usize| AdamState::new(n, sch.learning_rate, sch.weight_decay);
        let optim = Optimizers {
            trunk: adam(encoder.trunk.param_count()),
            target_head: adam(encoder.target_head.param_count()),
            residual_head: adam(encoder.residual_head.param_count()),
            target_predictor: adam(target_predictor.net.param_count()),
            sensitive_predictor: adam(sensitive_predictor.net.param_count()),
            target_adversary: adam(target_adversary.net.param_count()),
            sensitive_adversary: adam(sensitive_adversary.net.param_count()),
            decoder: decoder.as_ref().map(|d| adam(d.param_count())),
        };
        Ok(Self {
            encoder,
            target_predictor,
            sensitive_predictor,
            target_adversary,
            sensitive_adversary,
            decoder,
            optim,
            epoch: 0,
            history: Vec::new(),
            rng,
        })
    }

    /// Checks that `dataset` fits the networks.
    pub fn check_dataset(&self, dataset: &LabeledDataset) -> Result<(), TrainError> {
        if dataset.dim() != self.encoder.input_dim() {
            return Err(TrainError::Mismatch(format!(
                "dataset has {} features, encoder expects {}",
                dataset.dim(),
                self.encoder.input_dim()
            )));
        }
        if dataset.n_target_classes != self.target_predictor.class_count
            || dataset.n_sensitive_classes != self.sensitive_adversary.class_count
        {
            return Err(TrainError::Mismatch(format!(
                "dataset has {}/{} target/sensitive classes, model has {}/{}",
                dataset.n_target_classes,
                dataset.n_sensitive_classes,
                self.target_predictor.class_count,
                self.sensitive_adversary.class_count
            )));
        }
        Ok(())
    }

    /// Sensitive-adversary logits on the target embedding.
    pub fn adversary_logits(&self, features: &Matrix) -> Result<Matrix, NnError> {
        let (z_tar, _) = self.encoder.encode(features)?;
        self.sensitive_adversary.logits(&z_tar)
    }

    pub fn adversary_params(&self) -> Vec<f64> {
        [&self.target_adversary, &self.sensitive_adversary]
            .iter()
            .flat_map(|c| c.net.params().iter().copied())
            .collect()
    }

    pub fn encoder_params(&self) -> Vec<f64> {
        [&self.encoder.trunk, &self.encoder.target_head, &self.encoder.residual_head]
            .iter()
            .flat_map(|m| m.params().iter().copied())
            .collect()
    }
}

/// A minibatch copied out of a dataset.
#[derive(Debug, Clone)]
pub struct Batch {
    pub rows: Vec<usize>,
    pub features: Matrix,
    pub target: Vec<usize>,
    pub sensitive: Vec<usize>,
}

impl Batch {
    pub fn from_rows(ds: &LabeledDataset, rows: &[usize]) -> Self {
        Self {
            rows: rows.to_vec(),
            features: ds.features.select(Axis(0), rows),
            target: rows.iter().map(|&r| ds.target_labels[r]).collect(),
            sensitive: rows.iter().map(|&r| ds.sensitive_labels[r]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Focal peaks for every training row.
#[derive(Debug, Clone)]
pub enum PartitionTable {
    /// One target per sensitive class (label mode).
    PerClass(Vec<FocalTarget>),
    /// One target per dataset row (model mode).
    PerRow(Vec<FocalTarget>),
    /// No focal targets (uniform sanitization).
    Unused,
}

impl PartitionTable {
    pub fn from_labels(grouping: &LabelGrouping) -> Result<Self, EntropyError> {
        let targets = (0..grouping.n_classes())
            .map(|c| compute_tau(&partition_from_labels(c, grouping)?))
            .collect::<Result<_, _>>()?;
        Ok(Self::PerClass(targets))
    }

    /// Top-`k` partitions from the current sensitive adversary's detached
    /// output on every row of `ds`.
    pub fn from_model(state: &TrainState, ds: &LabeledDataset, k: usize) -> Result<Self, TrainError> {
        let logits = state.adversary_logits(&ds.features)?;
        let targets = logits
            .rows()
            .into_iter()
            .map(|row| {
                let l = LogitVector::new(row.to_vec())?;
                compute_tau(&partition_from_model(&l, k)?)
            })
            .collect::<Result<_, EntropyError>>()?;
        Ok(Self::PerRow(targets))
    }

    pub fn targets_for<'a>(&'a self, batch: &Batch) -> Vec<&'a FocalTarget> {
        match self {
            Self::PerClass(t) => batch.sensitive.iter().map(|&s| &t[s]).collect(),
            Self::PerRow(t) => batch.rows.iter().map(|&r| &t[r]).collect(),
            Self::Unused => Vec::new(),
        }
    }
}

fn label_grouping(ds: &LabeledDataset) -> Result<LabelGrouping, TrainError> {
    match &ds.grouping {
        Some(g) => Ok(g.clone()),
        // Binary attributes: each class is its own group.
        None if ds.n_sensitive_classes == 2 => Ok(LabelGrouping::new(vec![0, 1])?),
        None => Err(TrainError::Mismatch("label partitions need a label grouping".into())),
    }
}

fn scale(mut m: Matrix, w: f64) -> Matrix {
    m *= w;
    m
}

/// One encoder/predictor update against frozen adversaries.
///
/// Adversary terms with zero weight are not backpropagated. `targets` holds
/// one focal peak per batch row and is ignored in `MaxentUniform` mode or
/// when `include_adversaries` is false.
pub fn encoder_step(
    state: &mut TrainState,
    batch: &Batch,
    weights: &GameWeights,
    mode: SanitizationMode,
    targets: &[&FocalTarget],
    include_adversaries: bool,
) -> Result<EncoderLosses, TrainError> {
    let TrainState {
        encoder,
        target_predictor,
        sensitive_predictor,
        target_adversary,
        sensitive_adversary,
        decoder,
        optim,
        rng,
        ..
    } = state;
    let x = &batch.features;
    let (z_tar, z_res, enc_cache) = encoder.forward(x, Some(&mut *rng))?;
    let mut grad_tar = Matrix::zeros(z_tar.raw_dim());
    let mut grad_res = Matrix::zeros(z_res.raw_dim());
    let mut out = EncoderLosses::default();

    // Predictors.
    let (logits_t, cache_t) = target_predictor.net.forward(&z_tar, Some(&mut *rng))?;
    let (loss_t, g) = softmax_cross_entropy(&logits_t, &batch.target)?;
    let mut grads_tp = vec![0.0; target_predictor.net.param_count()];
    grad_tar += &target_predictor.net.backward(&cache_t, &scale(g, weights.alpha_t), &mut grads_tp)?;
    out.target = loss_t;
    out.target_accuracy = accuracy(&argmax_rows(&logits_t), &batch.target);

    let (logits_s, cache_s) = sensitive_predictor.net.forward(&z_res, Some(&mut *rng))?;
    let (loss_s, g) = softmax_cross_entropy(&logits_s, &batch.sensitive)?;
    let mut grads_sp = vec![0.0; sensitive_predictor.net.param_count()];
    grad_res += &sensitive_predictor.net.backward(&cache_s, &scale(g, weights.alpha_s), &mut grads_sp)?;
    out.sensitive = loss_s;

    // Sanitization against frozen adversaries (no dropout, no parameter
    // updates; only the embedding gradients are kept).
    if include_adversaries {
        let (logits, cache) = target_adversary.net.forward::<ChaCha8Rng>(&z_res, None)?;
        let (loss, g) = entropy_to_uniform_loss(&logits);
        out.adv_t = loss;
        if weights.beta_t_adv > 0.0 {
            let mut scratch = vec![0.0; target_adversary.net.param_count()];
            grad_res += &target_adversary.net.backward(&cache, &scale(g, weights.beta_t_adv), &mut scratch)?;
        }

        let (logits, cache) = sensitive_adversary.net.forward::<ChaCha8Rng>(&z_tar, None)?;
        let (loss, g) = match mode.focal() {
            Some(fm) => focal_sanitize_loss(&logits, targets, fm)?,
            None => entropy_to_uniform_loss(&logits),
        };
        out.adv_s = loss;
        if weights.beta_s_adv > 0.0 {
            let mut scratch = vec![0.0; sensitive_adversary.net.param_count()];
            grad_tar += &sensitive_adversary.net.backward(&cache, &scale(g, weights.beta_s_adv), &mut scratch)?;
        }
    }

    let mut grads_dec = None;
    if let Some(dec) = decoder.as_ref() {
        let joint = concatenate![Axis(1), z_tar, z_res];
        let (decoded, cache) = dec.forward(&joint, Some(&mut *rng))?;
        let (loss, g) = mse_reconstruction_loss(&decoded, x)?;
        out.recon = loss;
        let mut gd = vec![0.0; dec.param_count()];
        let gj = dec.backward(&cache, &scale(g, weights.recon), &mut gd)?;
        let dt = z_tar.ncols();
        grad_tar += &gj.slice(s![.., ..dt]);
        grad_res += &gj.slice(s![.., dt..]);
        grads_dec = Some(gd);
    }

    let mut eg = encoder.zero_grads();
    encoder.backward(&enc_cache, &grad_tar, &grad_res, &mut eg)?;

    optim.trunk.step(encoder.trunk.params_mut(), &eg.trunk);
    optim.target_head.step(encoder.target_head.params_mut(), &eg.target_head);
    optim.residual_head.step(encoder.residual_head.params_mut(), &eg.residual_head);
    optim.target_predictor.step(target_predictor.net.params_mut(), &grads_tp);
    optim.sensitive_predictor.step(sensitive_predictor.net.params_mut(), &grads_sp);
    if let (Some(dec), Some(gd), Some(opt)) = (decoder.as_mut(), grads_dec, optim.decoder.as_mut()) {
        opt.step(dec.params_mut(), &gd);
    }

    out.total = weights.alpha_t * out.target
        + weights.alpha_s * out.sensitive
        + weights.beta_t_adv * out.adv_t
        + weights.beta_s_adv * out.adv_s
        + weights.recon * out.recon;
    Ok(out)
}

/// One adversary update by cross-entropy on the true labels from the
/// frozen (dropout-free) embeddings.
pub fn adversary_step(state: &mut TrainState, batch: &Batch) -> Result<AdversaryLosses, TrainError> {
    let (z_tar, z_res) = state.encoder.encode(&batch.features)?;
    adversary_update(state, &z_tar, &z_res, batch)
}

fn adversary_update(state: &mut TrainState, z_tar: &Matrix, z_res: &Matrix, batch: &Batch) -> Result<AdversaryLosses, TrainError> {
    let TrainState {
        target_adversary,
        sensitive_adversary,
        optim,
        rng,
        ..
    } = state;
    let (logits, cache) = sensitive_adversary.net.forward(z_tar, Some(&mut *rng))?;
    let (loss_s, g) = softmax_cross_entropy(&logits, &batch.sensitive)?;
    let acc = accuracy(&argmax_rows(&logits), &batch.sensitive);
    let mut grads = vec![0.0; sensitive_adversary.net.param_count()];
    sensitive_adversary.net.backward(&cache, &g, &mut grads)?;
    optim.sensitive_adversary.step(sensitive_adversary.net.params_mut(), &grads);

    let (logits, cache) = target_adversary.net.forward(z_res, Some(&mut *rng))?;
    let (loss_t, g) = softmax_cross_entropy(&logits, &batch.target)?;
    let mut grads = vec![0.0; target_adversary.net.param_count()];
    target_adversary.net.backward(&cache, &g, &mut grads)?;
    optim.target_adversary.step(target_adversary.net.params_mut(), &grads);

    Ok(AdversaryLosses {
        sensitive: loss_s,
        target: loss_t,
        sensitive_accuracy: acc,
    })
}

fn epoch_batches(state: &mut TrainState, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut state.rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Default)]
struct Accum {
    rows: f64,
    sums: [f64; 8],
}

impl Accum {
    fn add(&mut self, n: usize, v: [f64; 8]) {
        let w = n as f64;
        self.rows += w;
        for (s, x) in self.sums.iter_mut().zip(v) {
            *s += w * x;
        }
    }

    fn finish(&self, phase: Phase, epoch: usize) -> EpochMetrics {
        let m = |i: usize| if self.rows > 0.0 { self.sums[i] / self.rows } else { 0.0 };
        EpochMetrics {
            phase,
            epoch,
            loss_total: m(0),
            loss_target: m(1),
            loss_sensitive: m(2),
            loss_adv_t: m(3),
            loss_adv_s: m(4),
            loss_recon: m(5),
            acc_target_train: m(6),
            acc_sensitive_adv_train: m(7),
        }
    }
}

fn check_finite(values: &[f64], phase: Phase, epoch: usize, batch: usize) -> Result<(), TrainError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TrainError::Divergence { phase, epoch, batch })
    }
}

/// One warm-up pass: predictors (and the optional decoder) only.
pub fn warmup_epoch(state: &mut TrainState, dataset: &LabeledDataset, weights: &GameWeights, batch_size: usize) -> Result<EpochMetrics, TrainError> {
    state.check_dataset(dataset)?;
    if dataset.is_empty() {
        return Err(TrainError::Mismatch("empty training set".into()));
    }
    let epoch = state.epoch;
    let weights = weights.without_adversaries();
    let mut acc = Accum::default();
    for (b, rows) in epoch_batches(state, dataset.len(), batch_size).into_iter().enumerate() {
        let batch = Batch::from_rows(dataset, &rows);
        let l = encoder_step(state, &batch, &weights, SanitizationMode::MaxentUniform, &[], false)?;
        check_finite(&[l.total], Phase::Warmup, epoch, b)?;
        acc.add(batch.len(), [l.total, l.target, l.sensitive, 0.0, 0.0, l.recon, l.target_accuracy, 0.0]);
    }
    let m = acc.finish(Phase::Warmup, epoch);
    state.history.push(m);
    state.epoch += 1;
    Ok(m)
}

/// One burn-in pass: per minibatch, `adversary_steps` adversary updates
/// then one encoder update.
pub fn burnin_epoch(
    state: &mut TrainState,
    dataset: &LabeledDataset,
    weights: &GameWeights,
    schedule: &TrainSchedule,
    mode: SanitizationMode,
    partitions: &PartitionTable,
) -> Result<EpochMetrics, TrainError> {
    state.check_dataset(dataset)?;
    let epoch = state.epoch;
    let mut acc = Accum::default();
    for (b, rows) in epoch_batches(state, dataset.len(), schedule.batch_size).into_iter().enumerate() {
        let batch = Batch::from_rows(dataset, &rows);
        let (z_tar, z_res) = state.encoder.encode(&batch.features)?;
        let mut adv = AdversaryLosses::default();
        for k in 0..schedule.adversary_steps {
            let l = adversary_update(state, &z_tar, &z_res, &batch)?;
            if k == 0 {
                adv = l;
            }
        }
        let targets = partitions.targets_for(&batch);
        let l = encoder_step(state, &batch, weights, mode, &targets, true)?;
        check_finite(&[l.total, adv.sensitive, adv.target], Phase::Burnin, epoch, b)?;
        acc.add(
            batch.len(),
            [l.total, l.target, l.sensitive, l.adv_t, l.adv_s, l.recon, l.target_accuracy, adv.sensitive_accuracy],
        );
    }
    let m = acc.finish(Phase::Burnin, epoch);
    state.history.push(m);
    state.epoch += 1;
    Ok(m)
}

/// Full two-phase training on `train_set`.
///
/// `on_epoch` is called after every epoch (e.g. for checkpointing).
pub fn train_with<F>(config: &ExperimentConfig, train_set: &LabeledDataset, mut on_epoch: F) -> Result<TrainState, TrainError>
where
    F: FnMut(&TrainState),
{
    config.validate()?;
    config.validate_against(train_set.n_sensitive_classes, train_set.grouping.is_some())?;
    let mut state = TrainState::new(config, train_set.dim(), train_set.n_target_classes, train_set.n_sensitive_classes)?;
    let g = &config.game;
    for _ in 0..g.schedule.warmup_epochs {
        warmup_epoch(&mut state, train_set, &g.weights, g.schedule.batch_size)?;
        on_epoch(&state);
    }
    let label_table = match (g.partition, g.sanitization) {
        (_, SanitizationMode::MaxentUniform) => None,
        (PartitionMode::Labels, _) => Some(PartitionTable::from_labels(&label_grouping(train_set)?)?),
        (PartitionMode::ModelTopk { .. }, _) => None,
    };
    for _ in 0..g.schedule.burnin_epochs {
        let model_table;
        let table = match (&label_table, g.partition, g.sanitization) {
            (Some(t), _, _) => t,
            (None, PartitionMode::ModelTopk { k }, mode) if mode != SanitizationMode::MaxentUniform => {
                model_table = PartitionTable::from_model(&state, train_set, k)?;
                &model_table
            }
            _ => {
                model_table = PartitionTable::Unused;
                &model_table
            }
        };
        burnin_epoch(&mut state, train_set, &g.weights, &g.schedule, g.sanitization, table)?;
        on_epoch(&state);
    }
    Ok(state)
}

pub fn train(config: &ExperimentConfig, train_set: &LabeledDataset) -> Result<TrainState, TrainError> {
    train_with(config, train_set, |_| {})
}

pub fn write_metrics_csv<W: Write>(history: &[EpochMetrics], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in history {
        w.write_record([
            m.phase.to_string(),
            m.epoch.to_string(),
            m.loss_total.to_string(),
            m.loss_target.to_string(),
            m.loss_sensitive.to_string(),
            m.loss_adv_t.to_string(),
            m.loss_adv_s.to_string(),
            m.loss_recon.to_string(),
            m.acc_target_train.to_string(),
            m.acc_sensitive_adv_train.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_metrics_csv(history: &[EpochMetrics], path: &Path) -> std::io::Result<()> {
    let f = std::fs::File::create(path)?;
    write_metrics_csv(history, f).map_err(std::io::Error::other)
}

/// Named weight in a grid specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKey {
    AlphaT,
    AlphaS,
    BetaT,
    BetaS,
    Recon,
}

impl WeightKey {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha_t" => Some(Self::AlphaT),
            "alpha_s" => Some(Self::AlphaS),
            "beta_t" | "beta_t_adv" => Some(Self::BetaT),
            "beta_s" | "beta_s_adv" => Some(Self::BetaS),
            "recon" => Some(Self::Recon),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::AlphaT => "alpha_T",
            Self::AlphaS => "alpha_S",
            Self::BetaT => "beta_T",
            Self::BetaS => "beta_S",
            Self::Recon => "recon",
        }
    }

    pub fn set(self, w: &mut GameWeights, v: f64) {
        match self {
            Self::AlphaT => w.alpha_t = v,
            Self::AlphaS => w.alpha_s = v,
            Self::BetaT => w.beta_t_adv = v,
            Self::BetaS => w.beta_s_adv = v,
            Self::Recon => w.recon = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("grid parse error at position {position}: {message}")]
pub struct GridParseError {
    pub position: usize,
    pub message: String,
}

/// Cartesian product of per-weight value lists, e.g.
/// `beta_S=0,0.5,1;alpha_T=0.5,1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightGrid {
    pub axes: Vec<(WeightKey, Vec<f64>)>,
}

impl WeightGrid {
    pub fn single(key: WeightKey, values: Vec<f64>) -> Self {
        Self {
            axes: vec![(key, values)],
        }
    }

    pub fn parse(text: &str) -> Result<Self, GridParseError> {
        let err = |position: usize, message: &str| GridParseError {
            position,
            message: message.to_string(),
        };
        let mut axes = Vec::new();
        let mut pos = 0;
        for part in text.split(';') {
            let start = pos;
            pos += part.len() + 1;
            if part.trim().is_empty() {
                return Err(err(start, "empty axis"));
            }
            let eq = part.find('=').ok_or_else(|| err(start, "expected name=values"))?;
            let key = WeightKey::parse(part[..eq].trim()).ok_or_else(|| err(start, "unknown weight name"))?;
            let mut vpos = start + eq + 1;
            let mut values = Vec::new();
            for v in part[eq + 1..].split(',') {
                let x: f64 = v.trim().parse().map_err(|_| err(vpos, "expected a number"))?;
                if !(x.is_finite() && x >= 0.0) {
                    return Err(err(vpos, "weights must be finite and >= 0"));
                }
                values.push(x);
                vpos += v.len() + 1;
            }
            axes.push((key, values));
        }
        Ok(Self { axes })
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty() || self.axes.iter().any(|(_, v)| v.is_empty())
    }

    /// Grid points in row-major order (last axis fastest).
    pub fn points(&self, base: GameWeights) -> Vec<GameWeights> {
        let mut out = vec![base];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|w| {
                    values.iter().map(move |&v| {
                        let mut w = w;
                        key.set(&mut w, v);
                        w
                    })
                })
                .collect();
        }
        out
    }
}

/// SplitMix64 finalizer over `(base, index)`.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    let mut z = base ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub index: usize,
    pub seed: u64,
    pub weights: GameWeights,
    pub target_accuracy: f64,
    pub adversarial_accuracy: f64,
    /// Target accuracy over adversarial accuracy.
    pub ratio: f64,
    pub dp_gap: Option<f64>,
    pub eod_gap: Option<f64>,
    pub error: Option<String>,
}

impl GridRow {
    fn failed(index: usize, seed: u64, weights: GameWeights, error: String) -> Self {
        Self {
            index,
            seed,
            weights,
            target_accuracy: f64::NAN,
            adversarial_accuracy: f64::NAN,
            ratio: f64::NAN,
            dp_gap: None,
            eod_gap: None,
            error: Some(error),
        }
    }
}

/// Train and probe one configuration.
pub fn run_point(config: &ExperimentConfig, splits: &Splits, index: usize) -> GridRow {
    let result = (|| -> Result<GridRow, TrainError> {
        let state = train(config, &splits.train)?;
        let e = eval::evaluate_run(config, splits, &state)?;
        Ok(GridRow {
            index,
            seed: config.seed,
            weights: config.game.weights,
            target_accuracy: e.target_accuracy,
            adversarial_accuracy: e.adversarial_accuracy,
            ratio: e.target_accuracy / e.adversarial_accuracy.max(f64::MIN_POSITIVE),
            dp_gap: e.fairness.as_ref().map(|f| f.dp_gap),
            eod_gap: e.fairness.as_ref().map(|f| f.eod_gap),
            error: None,
        })
    })();
    result.unwrap_or_else(|e| GridRow::failed(index, config.seed, config.game.weights, e.to_string()))
}

/// Runs every grid point (each with its own derived seed) and returns the
/// rows in grid order.
pub fn run_grid(config: &ExperimentConfig, splits: &Splits, grid: &WeightGrid, parallel: usize) -> Result<Vec<GridRow>, TrainError> {
    if grid.is_empty() {
        return Err(TrainError::EmptyGrid);
    }
    let points = grid.points(config.game.weights);
    let job = |(i, w): (usize, &GameWeights)| {
        let mut cfg = config.clone();
        cfg.game.weights = *w;
        cfg.seed = derive_seed(config.seed, i);
        run_point(&cfg, splits, i)
    };
    if parallel <= 1 {
        return Ok(points.iter().enumerate().map(job).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| TrainError::Mismatch(e.to_string()))?;
    Ok(pool.install(|| points.par_iter().enumerate().map(job).collect()))
}

/// Grid search sorted by descending target/adversarial accuracy ratio;
/// failed points go last.
pub fn grid_search(config: &ExperimentConfig, splits: &Splits, grid: &WeightGrid, parallel: usize) -> Result<Vec<GridRow>, TrainError> {
    let mut rows = run_grid(config, splits, grid, parallel)?;
    rows.sort_by(|a, b| {
        let key = |r: &GridRow| if r.ratio.is_nan() { f64::NEG_INFINITY } else { r.ratio };
        key(b).total_cmp(&key(a)).then(a.index.cmp(&b.index))
    });
    Ok(rows)
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "index", "seed", "alpha_T", "alpha_S", "beta_T", "beta_S", "recon", "target_acc", "adversarial_acc", "ratio", "dp_gap",
        "eod_gap", "error",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.seed.to_string(),
            r.weights.alpha_t.to_string(),
            r.weights.alpha_s.to_string(),
            r.weights.beta_t_adv.to_string(),
            r.weights.beta_s_adv.to_string(),
            r.weights.recon.to_string(),
            r.target_accuracy.to_string(),
            r.adversarial_accuracy.to_string(),
            r.ratio.to_string(),
            opt(r.dp_gap),
            opt(r.eod_gap),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = WeightGrid::parse("beta_S=0,0.5,1").unwrap();
        assert_eq!(g.axes, vec![(WeightKey::BetaS, vec![0.0, 0.5, 1.0])]);
        assert_eq!(g.points(GameWeights::default()).len(), 3);

        let g = WeightGrid::parse("alpha_T=0.5,1;beta_s=0,1").unwrap();
        let pts = g.points(GameWeights::default());
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[1].alpha_t, pts[1].beta_s_adv), (0.5, 1.0));

        assert_eq!(WeightGrid::parse("beta_S=0,x,1").unwrap_err().position, 9);
        assert_eq!(WeightGrid::parse("gamma=1").unwrap_err().position, 0);
        assert_eq!(WeightGrid::parse("beta_S=1;").unwrap_err().position, 9);
        assert!(WeightGrid::parse("beta_S").is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..50).map(|i| derive_seed(7, i)).collect();
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 50);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn weights_validation() {
        let w = GameWeights {
            beta_s_adv: -1.0,
            ..Default::default()
        };
        assert_eq!(w.validate().unwrap_err().0, "beta_s_adv");
    }
}
