//! Declarative experiment description, parsed from a single JSON document.
//!
//! Unknown keys are rejected at every level and the whole document is
//! validated before any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    generate_hierarchical_gaussian, read_cache, read_tabular_csv, split, DataError, LabeledDataset, SplitFractions, Splits,
    Standardizer, SyntheticSpec, TabularSchema,
};
use crate::eval::{Capacity, EodMode};
use crate::game::{GameWeights, PartitionMode, SanitizationMode, TrainSchedule};
use crate::nn::{Activation, MlpSpec, SplitEncoderSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error at '{path}': {message}")]
    Parse { path: String, message: String },
    #[error("invalid config at '{field}': {message}")]
    Invalid { field: String, message: String },
}

pub(crate) fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
    /// A dataset cache written by `gen-data`.
    Cache { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub schema: TabularSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub trunk_hidden: Vec<usize>,
    pub trunk_width: usize,
    pub head_hidden: Vec<usize>,
    /// Width of both embeddings unless overridden below.
    pub embedding_dim: usize,
    pub target_dim: Option<usize>,
    pub residual_dim: Option<usize>,
    pub classifier_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            trunk_hidden: vec![128],
            trunk_width: 128,
            head_hidden: vec![],
            embedding_dim: 32,
            target_dim: None,
            residual_dim: None,
            classifier_hidden: vec![64],
            decoder_hidden: vec![128],
            activation: Activation::Prelu,
            dropout: 0.0,
        }
    }
}

impl ArchitectureConfig {
    pub fn target_dim(&self) -> usize {
        self.target_dim.unwrap_or(self.embedding_dim)
    }

    pub fn residual_dim(&self) -> usize {
        self.residual_dim.unwrap_or(self.embedding_dim)
    }

    pub fn encoder_spec(&self, input_dim: usize) -> SplitEncoderSpec {
        SplitEncoderSpec {
            input_dim,
            trunk_hidden: self.trunk_hidden.clone(),
            trunk_width: self.trunk_width,
            head_hidden: self.head_hidden.clone(),
            target_dim: self.target_dim(),
            residual_dim: self.residual_dim(),
            activation: self.activation,
            dropout_rate: self.dropout,
        }
    }

    pub fn classifier_spec(&self, input_dim: usize, classes: usize) -> MlpSpec {
        MlpSpec::new(input_dim, self.classifier_hidden.clone(), classes, self.activation).with_dropout(self.dropout)
    }

    pub fn decoder_spec(&self, output_dim: usize) -> MlpSpec {
        MlpSpec::new(
            self.target_dim() + self.residual_dim(),
            self.decoder_hidden.clone(),
            output_dim,
            self.activation,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub weights: GameWeights,
    pub schedule: TrainSchedule,
    pub sanitization: SanitizationMode,
    pub partition: PartitionMode,
    /// Write an intermediate checkpoint every this many epochs.
    pub checkpoint_every: Option<usize>,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            weights: GameWeights::default(),
            schedule: TrainSchedule::default(),
            sanitization: SanitizationMode::FocalKlTau,
            partition: PartitionMode::Labels,
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub capacities: Vec<Capacity>,
    pub probe_epochs: usize,
    pub probe_hidden: Vec<usize>,
    pub probe_learning_rate: f64,
    pub probe_weight_decay: f64,
    pub probe_batch_size: usize,
    pub fairness: bool,
    pub eod: EodMode,
    /// Values of the sensitive-adversary weight swept by `sweep`.
    pub beta_grid: Vec<f64>,
    /// Optional full weight grid, same syntax as `--grid`.
    pub grid: Option<String>,
    pub hub_threshold: usize,
    pub export_embeddings: bool,
    pub parallel: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            capacities: vec![Capacity::Normal],
            probe_epochs: 100,
            probe_hidden: vec![64],
            probe_learning_rate: 1e-3,
            probe_weight_decay: 1e-4,
            probe_batch_size: 128,
            fairness: false,
            eod: EodMode::Max,
            beta_grid: vec![0.0, 0.5, 1.0],
            grid: None,
            hub_threshold: 4,
            export_embeddings: true,
            parallel: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Number of sensitive classes, when it is known without reading data.
    pub fn static_sensitive_classes(&self) -> Option<usize> {
        match &self.dataset {
            DatasetConfig::Synthetic(s) => Some(s.n_sensitive()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.dataset {
            DatasetConfig::Synthetic(s) => s.validate().map_err(|e| invalid("dataset.synthetic", e))?,
            DatasetConfig::Csv(c) => {
                if c.path.as_os_str().is_empty() {
                    return Err(invalid("dataset.csv.path", "empty path"));
                }
                if c.schema.target_positive.is_empty() {
                    return Err(invalid("dataset.csv.schema.target_positive", "at least one value required"));
                }
            }
            DatasetConfig::Cache { path } => {
                if path.as_os_str().is_empty() {
                    return Err(invalid("dataset.cache.path", "empty path"));
                }
            }
        }
        // Probes always need validation and test rows.
        self.split.validate().map_err(|e| invalid("split", e))?;

        let a = &self.architecture;
        if a.trunk_width == 0
            || a.target_dim() == 0
            || a.residual_dim() == 0
            || [&a.trunk_hidden, &a.head_hidden, &a.classifier_hidden, &a.decoder_hidden]
                .iter()
                .any(|v| v.contains(&0))
        {
            return Err(invalid("architecture", "all layer widths must be >= 1"));
        }
        if !(0.0..1.0).contains(&a.dropout) {
            return Err(invalid("architecture.dropout", "must lie in [0, 1)"));
        }

        let g = &self.game;
        g.weights.validate().map_err(|(f, m)| invalid(&format!("game.weights.{f}"), m))?;
        if g.schedule.warmup_epochs > 0 && g.weights.alpha_t <= 0.0 && g.weights.alpha_s <= 0.0 {
            return Err(invalid("game.weights", "warm-up needs alpha_t or alpha_s > 0"));
        }
        g.schedule.validate().map_err(|(f, m)| invalid(&format!("game.schedule.{f}"), m))?;
        if let PartitionMode::ModelTopk { k } = g.partition {
            if k == 0 {
                return Err(invalid("game.partition.k", "k must be >= 1"));
            }
            if let Some(n) = self.static_sensitive_classes() {
                if k >= n {
                    return Err(invalid("game.partition.k", format!("k = {k} must be <= {}", n - 1)));
                }
            }
        }
        if g.checkpoint_every == Some(0) {
            return Err(invalid("game.checkpoint_every", "must be >= 1"));
        }

        let e = &self.eval;
        if e.capacities.is_empty() {
            return Err(invalid("eval.capacities", "at least one capacity"));
        }
        if e.probe_epochs == 0 || e.probe_batch_size == 0 || e.probe_hidden.contains(&0) {
            return Err(invalid("eval", "probe epochs, batch size and widths must be >= 1"));
        }
        if !(e.probe_learning_rate.is_finite() && e.probe_learning_rate >= 0.0) {
            return Err(invalid("eval.probe_learning_rate", "must be finite and >= 0"));
        }
        if e.beta_grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(invalid("eval.beta_grid", "values must be finite and >= 0"));
        }
        if let Some(grid) = &e.grid {
            crate::game::WeightGrid::parse(grid).map_err(|err| invalid("eval.grid", err))?;
        }
        if e.parallel == 0 {
            return Err(invalid("eval.parallel", "must be >= 1"));
        }
        Ok(())
    }

    /// Checks that depend on the loaded data.
    pub fn validate_against(&self, n_sensitive: usize, has_grouping: bool) -> Result<(), ConfigError> {
        match self.game.partition {
            PartitionMode::ModelTopk { k } if k >= n_sensitive => Err(invalid(
                "game.partition.k",
                format!("k = {k} must be <= {} for this dataset", n_sensitive - 1),
            )),
            PartitionMode::Labels
                if !has_grouping && n_sensitive != 2 && self.game.sanitization != SanitizationMode::MaxentUniform =>
            {
                Err(invalid(
                    "game.partition.mode",
                    "'labels' needs a label grouping; use 'model_topk' for this dataset",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Reads or generates the configured dataset. CSV features are returned
/// unstandardized.
pub fn load_dataset(config: &ExperimentConfig) -> Result<LabeledDataset, DataError> {
    match &config.dataset {
        DatasetConfig::Synthetic(spec) => generate_hierarchical_gaussian(spec, config.seed),
        DatasetConfig::Csv(c) => Ok(read_tabular_csv(&c.path, &c.schema)?.dataset),
        DatasetConfig::Cache { path } => read_cache(path),
    }
}

/// Loads, splits and (for CSV sources) standardizes numeric columns with
/// training-split statistics.
pub fn prepare_splits(config: &ExperimentConfig) -> Result<Splits, DataError> {
    let (dataset, numeric) = match &config.dataset {
        DatasetConfig::Csv(c) => {
            let load = read_tabular_csv(&c.path, &c.schema)?;
            (load.dataset, load.numeric_columns)
        }
        _ => (load_dataset(config)?, Vec::new()),
    };
    let mut splits = split(&dataset, config.split, config.seed)?;
    if !numeric.is_empty() {
        let st = Standardizer::fit(&splits.train.features, numeric);
        for part in [&mut splits.train, &mut splits.val, &mut splits.test] {
            st.apply(&mut part.features);
        }
    }
    Ok(splits)
}
