//! Command implementations. Each public `run_*` function takes a fully
//! resolved config so it can be driven without going through argv.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use focal_core::config::{prepare_splits, DatasetConfig};
use focal_core::data::{generate_hierarchical_gaussian, write_cache};
use focal_core::eval::{
    self, delta_accuracy, export_embeddings, hub_graph, label_attributes, model_fairness, probe_suite, Capacity,
    DeltaAccuracy, HubStats, ProbeReport, ProbeSettings,
};
use focal_core::game::{self, save_metrics_csv, train_with, EpochMetrics, WeightGrid, METRICS_HEADER};
use focal_core::nn::checkpoint;
use focal_core::{ExperimentConfig, SanitizationMode, Splits, TrainState};

use crate::{CapacityArg, CliError, CommonArgs, ModeArg, SEED_ENV};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.fsds";
pub const PROBES_FILE: &str = "probes.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const REPORT_FILE: &str = "report.json";
pub const HUB_FILE: &str = "hub_edges.csv";
pub const DELTA_FILE: &str = "delta_accuracy.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";

/// Config and trained state stored together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub config: ExperimentConfig,
    pub state: TrainState,
}

/// Loads the config and applies command-line and environment overrides.
/// Precedence for the seed: `--seed`, then the environment, then the file.
pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("{SEED_ENV}: '{v}' is not an unsigned integer")))?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = args.mode {
        cfg.game.sanitization = match mode {
            ModeArg::FocalKlTau => SanitizationMode::FocalKlTau,
            ModeArg::FocalSplit => SanitizationMode::FocalSplit,
            ModeArg::MaxentUniform => SanitizationMode::MaxentUniform,
        };
    }
    if let Some(p) = args.parallel {
        cfg.eval.parallel = p;
    }
    if let Some(c) = args.capacity {
        cfg.eval.capacities = capacities(c);
    }
    if let Some(g) = &args.grid {
        cfg.eval.grid = Some(g.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn capacities(arg: CapacityArg) -> Vec<Capacity> {
    match arg {
        CapacityArg::Normal => vec![Capacity::Normal],
        CapacityArg::Strong => vec![Capacity::Strong],
        CapacityArg::Both => vec![Capacity::Normal, Capacity::Strong],
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::io(format!("{}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::artifact)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn gen_data(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let path = run_gen_data(&cfg)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Writes the synthetic dataset cache and returns its path.
pub fn run_gen_data(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let DatasetConfig::Synthetic(spec) = &cfg.dataset else {
        return Err(CliError::config("config at 'dataset.synthetic': gen-data needs a synthetic dataset section"));
    };
    let ds = generate_hierarchical_gaussian(spec, cfg.seed)?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(DATASET_FILE);
    write_cache(&path, &ds)?;
    println!(
        "{} examples, {} features, {} target classes, chance {:.4}",
        ds.len(),
        ds.dim(),
        ds.n_target_classes,
        1.0 / ds.n_target_classes as f64
    );
    println!(
        "{} sensitive classes, chance {:.4}",
        ds.n_sensitive_classes,
        1.0 / ds.n_sensitive_classes as f64
    );
    let counts = ds.sensitive_counts();
    let (lo, hi) = (counts.iter().min().unwrap_or(&0), counts.iter().max().unwrap_or(&0));
    println!("examples per sensitive class: min {lo}, max {hi}");
    Ok(path)
}

pub fn train(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let out = run_train(&cfg)?;
    let last = out.state.history.last();
    println!(
        "trained {} epochs; final target acc {:.4}, adversary acc {:.4}; outputs in {}",
        out.state.epoch,
        last.map_or(f64::NAN, |m| m.acc_target_train),
        last.map_or(f64::NAN, |m| m.acc_sensitive_adv_train),
        cfg.output_dir.display()
    );
    Ok(())
}

pub struct TrainOutcome {
    pub splits: Splits,
    pub state: TrainState,
    pub summary: BTreeMap<String, Value>,
}

/// Trains and writes `checkpoint.json`, `metrics.csv`, `summary.json`
/// and `manifest.json` (plus periodic checkpoints) under the output dir.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainOutcome, CliError> {
    let splits = prepare_splits(cfg)?;
    ensure_dir(&cfg.output_dir)?;
    let every = cfg.game.checkpoint_every;
    let mut hook_error = None;
    let state = train_with(cfg, &splits.train, |state| {
        if let Some(n) = every {
            if state.epoch % n == 0 && hook_error.is_none() {
                let dir = cfg.output_dir.join("checkpoints");
                let res = ensure_dir(&dir).and_then(|_| save_checkpoint(&dir.join(format!("epoch-{:04}.json", state.epoch)), cfg, state));
                hook_error = res.err();
            }
        }
    })?;
    if let Some(e) = hook_error {
        return Err(e);
    }
    save_checkpoint(&cfg.output_dir.join(CHECKPOINT_FILE), cfg, &state)?;
    let metrics = cfg.output_dir.join(METRICS_FILE);
    save_metrics_csv(&state.history, &metrics).map_err(|e| io_err(&metrics, e))?;
    let summary = train_summary(cfg, &splits, &state);
    write_json(&cfg.output_dir.join(SUMMARY_FILE), &summary)?;
    write_json(
        &cfg.output_dir.join(MANIFEST_FILE),
        &json!({
            "command": "train",
            "timestamp": chrono::Utc::now().to_rfc3339(),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed,
        }),
    )?;
    Ok(TrainOutcome { splits, state, summary })
}

fn save_checkpoint(path: &Path, cfg: &ExperimentConfig, state: &TrainState) -> Result<(), CliError> {
    let ck = RunCheckpoint {
        config: cfg.clone(),
        state: state.clone(),
    };
    checkpoint::save(path, &ck)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<RunCheckpoint, CliError> {
    Ok(checkpoint::load(path)?)
}

fn metrics_entries(prefix: &str, m: &EpochMetrics, out: &mut BTreeMap<String, Value>) {
    let fields = [
        ("loss_total", m.loss_total),
        ("loss_target", m.loss_target),
        ("loss_sensitive", m.loss_sensitive),
        ("loss_adv_T", m.loss_adv_t),
        ("loss_adv_S", m.loss_adv_s),
        ("loss_recon", m.loss_recon),
        ("acc_target_train", m.acc_target_train),
        ("acc_sensitive_adv_train", m.acc_sensitive_adv_train),
    ];
    for (k, v) in fields {
        out.insert(format!("{prefix}.{k}"), json!(v));
    }
}

fn train_summary(cfg: &ExperimentConfig, splits: &Splits, state: &TrainState) -> BTreeMap<String, Value> {
    let mut s = BTreeMap::new();
    s.insert("seed".into(), json!(cfg.seed));
    s.insert("epochs".into(), json!(state.epoch));
    s.insert("sanitization".into(), json!(cfg.game.sanitization));
    s.insert("partition".into(), json!(cfg.game.partition));
    s.insert("weights".into(), json!(cfg.game.weights));
    for (name, d) in splits.named() {
        s.insert(format!("rows.{name}"), json!(d.len()));
    }
    s.insert("classes.target".into(), json!(splits.train.n_target_classes));
    s.insert("classes.sensitive".into(), json!(splits.train.n_sensitive_classes));
    if let Some(m) = state.history.last() {
        metrics_entries("final", m, &mut s);
    }
    s
}

pub fn probe(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let path = args.checkpoint.clone().unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
    let ck = load_checkpoint(&path)?;
    let splits = prepare_splits(&cfg)?;
    let reports = run_probe(&cfg, &ck.state, &splits)?;
    for r in &reports {
        println!(
            "{:?} embedding / {:?} label / {}: test {:.4} (chance {:.4})",
            r.embedding,
            r.label,
            r.capacity.name(),
            r.test_accuracy,
            r.chance_level
        );
    }
    Ok(())
}

/// Probe suite on frozen embeddings; writes `probes.csv`.
pub fn run_probe(cfg: &ExperimentConfig, state: &TrainState, splits: &Splits) -> Result<Vec<ProbeReport>, CliError> {
    state.check_dataset(&splits.train)?;
    let reports = probe_suite(state, splits, &cfg.eval.capacities, &ProbeSettings::from_config(&cfg.eval), cfg.seed)?;
    ensure_dir(&cfg.output_dir)?;
    eval::write_probe_csv(&reports, create(&cfg.output_dir.join(PROBES_FILE))?)?;
    Ok(reports)
}

pub fn sweep(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let path = run_sweep(&cfg)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// A full weight grid when one is configured, otherwise the configured
/// sensitive-weight curve.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let splits = prepare_splits(cfg)?;
    ensure_dir(&cfg.output_dir)?;
    let parallel = cfg.eval.parallel;
    if let Some(text) = &cfg.eval.grid {
        let grid = WeightGrid::parse(text).map_err(|e| CliError::config(format!("--grid: {e}")))?;
        let rows = game::grid_search(cfg, &splits, &grid, parallel)?;
        for r in rows.iter().filter(|r| r.error.is_some()) {
            eprintln!("grid point {} failed: {}", r.index, r.error.as_deref().unwrap_or(""));
        }
        let path = cfg.output_dir.join(GRID_FILE);
        game::write_grid_csv(&rows, create(&path)?)?;
        Ok(path)
    } else {
        if cfg.eval.beta_grid.is_empty() {
            return Err(CliError::config("config at 'eval.beta_grid': empty grid"));
        }
        let curve = eval::tradeoff_sweep(cfg, &splits, &cfg.eval.beta_grid, parallel)?;
        let path = cfg.output_dir.join(CURVE_FILE);
        eval::write_curve_csv(&curve, create(&path)?)?;
        Ok(path)
    }
}

pub fn report(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let summary = run_report(&cfg)?;
    println!("wrote {} ({} entries)", cfg.output_dir.join(REPORT_FILE).display(), summary.len());
    Ok(())
}

/// Last row of a metrics CSV, checking its header.
pub fn read_final_metrics(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    if !path.is_file() {
        return Err(CliError::artifact(format!("incomplete run directory: {} is missing", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(CliError::artifact(format!("{}: unexpected header", path.display())));
    }
    let mut last = None;
    for rec in r.records() {
        last = Some(rec.map_err(|e| io_err(path, e))?);
    }
    let last = last.ok_or_else(|| CliError::artifact(format!("{}: no rows", path.display())))?;
    Ok(header.iter().zip(last.iter()).map(|(k, v)| (k.to_string(), v.to_string())).collect())
}

/// Runs every analysis on a finished run directory and writes
/// `report.json` plus per-analysis CSVs.
pub fn run_report(cfg: &ExperimentConfig) -> Result<BTreeMap<String, Value>, CliError> {
    let dir = &cfg.output_dir;
    let final_metrics = read_final_metrics(&dir.join(METRICS_FILE))?;
    let ck_path = dir.join(CHECKPOINT_FILE);
    if !ck_path.is_file() {
        return Err(CliError::artifact(format!("incomplete run directory: {} is missing", ck_path.display())));
    }
    let ck = load_checkpoint(&ck_path)?;
    let state = &ck.state;
    let splits = prepare_splits(cfg)?;
    state.check_dataset(&splits.train)?;

    let mut s = BTreeMap::new();
    for (k, v) in final_metrics {
        s.insert(format!("train.final.{k}"), json!(v));
    }

    let probes = run_probe(cfg, state, &splits)?;
    for r in &probes {
        let key = format!(
            "probe.{}.{}.{}",
            kind(r.embedding),
            kind(r.label),
            r.capacity.name()
        );
        s.insert(format!("{key}.test_acc"), json!(r.test_accuracy));
        s.insert(format!("{key}.chance"), json!(r.chance_level));
    }

    let graph = hub_graph(state, &splits.test)?;
    let stats = graph.stats(cfg.eval.hub_threshold);
    eval::write_hub_csv(&graph, create(&dir.join(HUB_FILE))?)?;
    insert_hub(&stats, &mut s);

    let settings = ProbeSettings::from_config(&cfg.eval);
    let delta = delta_accuracy(state, &splits, &label_attributes(&splits), &settings, cfg.seed)?;
    eval::write_delta_csv(&delta, create(&dir.join(DELTA_FILE))?)?;
    insert_delta(&delta, &mut s);

    if cfg.eval.fairness {
        match model_fairness(state, &splits, cfg.eval.eod)? {
            Some(f) => {
                s.insert("fairness.dp_gap".into(), json!(f.dp_gap));
                s.insert("fairness.eod_gap".into(), json!(f.eod_gap));
                s.insert("fairness.tpr_gap".into(), json!(f.tpr_gap));
                s.insert("fairness.fpr_gap".into(), json!(f.fpr_gap));
                s.insert("fairness.eod_mode".into(), json!(cfg.eval.eod));
            }
            None => {
                s.insert("notes.fairness".into(), json!("not applicable: target and sensitive labels must be binary"));
            }
        }
    } else {
        s.insert("notes.fairness".into(), json!("disabled"));
    }

    if cfg.eval.export_embeddings {
        export_embeddings(state, &splits, &dir.join(EMBEDDINGS_FILE))?;
        s.insert("embeddings.file".into(), json!(EMBEDDINGS_FILE));
    }
    write_json(&dir.join(REPORT_FILE), &s)?;
    Ok(s)
}

fn kind<T: Serialize>(v: T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn insert_hub(stats: &HubStats, s: &mut BTreeMap<String, Value>) {
    s.insert("hub.average_out_degree".into(), json!(stats.average_out_degree));
    s.insert("hub.distinct_edges".into(), json!(stats.distinct_edges));
    s.insert("hub.threshold".into(), json!(stats.hub_threshold));
    s.insert("hub.count".into(), json!(stats.hubs.len()));
    s.insert("hub.in_degree_histogram".into(), json!(stats.in_degree_histogram));
}

fn insert_delta(rows: &[DeltaAccuracy], s: &mut BTreeMap<String, Value>) {
    for r in rows {
        let p = format!("delta.{}", r.attribute);
        s.insert(format!("{p}.acc_z_tar"), json!(r.acc_target_embedding));
        s.insert(format!("{p}.acc_z_res"), json!(r.acc_residual_embedding));
        s.insert(format!("{p}.delta"), json!(r.delta));
        s.insert(format!("{p}.acc_minus_majority_z_tar"), json!(r.normalized_target_embedding));
        s.insert(format!("{p}.acc_minus_majority_z_res"), json!(r.normalized_residual_embedding));
    }
}
