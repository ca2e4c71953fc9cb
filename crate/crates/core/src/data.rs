//! Labeled datasets: a synthetic hierarchical Gaussian generator, a tabular
//! CSV ingester, stratified splitting, and a binary cache format.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;
use crate::similarity::LabelGrouping;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("all {0} rows dropped for missing values")]
    AllRowsDropped(usize),
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    ParseNumber { row: usize, column: String, value: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid split fractions {0:?}: each must be > 0 and they must sum to 1")]
    InvalidFractions([f64; 3]),
    #[error("sensitive class {class} has {count} rows but {needed} splits need it")]
    ClassTooSmall { class: usize, count: usize, needed: usize },
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("bad dataset cache: {0}")]
    Cache(String),
}

/// Examples with one categorical target and one categorical sensitive label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub target_labels: Vec<usize>,
    pub sensitive_labels: Vec<usize>,
    pub n_target_classes: usize,
    pub n_sensitive_classes: usize,
    /// Sensitive class -> group, when label structure is known.
    pub grouping: Option<LabelGrouping>,
    /// Stable example ids (row index in the source).
    pub ids: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        features: Matrix,
        target_labels: Vec<usize>,
        sensitive_labels: Vec<usize>,
        n_target_classes: usize,
        n_sensitive_classes: usize,
        grouping: Option<LabelGrouping>,
    ) -> Result<Self, DataError> {
        let ids = (0..features.nrows()).collect();
        let ds = Self {
            features,
            target_labels,
            sensitive_labels,
            n_target_classes,
            n_sensitive_classes,
            grouping,
            ids,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.features.nrows();
        if self.target_labels.len() != n || self.sensitive_labels.len() != n || self.ids.len() != n {
            return Err(DataError::Inconsistent("row counts differ across fields".into()));
        }
        if self.target_labels.iter().any(|&t| t >= self.n_target_classes) {
            return Err(DataError::Inconsistent("target label out of range".into()));
        }
        if self.sensitive_labels.iter().any(|&s| s >= self.n_sensitive_classes) {
            return Err(DataError::Inconsistent("sensitive label out of range".into()));
        }
        if let Some(g) = &self.grouping {
            if g.n_classes() != self.n_sensitive_classes {
                return Err(DataError::Inconsistent("grouping size differs from sensitive classes".into()));
            }
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Inconsistent("non-finite feature".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            target_labels: rows.iter().map(|&r| self.target_labels[r]).collect(),
            sensitive_labels: rows.iter().map(|&r| self.sensitive_labels[r]).collect(),
            n_target_classes: self.n_target_classes,
            n_sensitive_classes: self.n_sensitive_classes,
            grouping: self.grouping.clone(),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
        }
    }

    pub fn sensitive_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_sensitive_classes];
        for &s in &self.sensitive_labels {
            c[s] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &LabeledDataset); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Superclass centers, subclass offsets around them, and isotropic sample
/// noise around each subclass center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "defaults::n_super")]
    pub n_super: usize,
    #[serde(default = "defaults::n_sub_per_super")]
    pub n_sub_per_super: usize,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::sigma_super")]
    pub sigma_super: f64,
    #[serde(default = "defaults::sigma_sub")]
    pub sigma_sub: f64,
    #[serde(default = "defaults::sigma_noise")]
    pub sigma_noise: f64,
    #[serde(default = "defaults::samples_per_sub")]
    pub samples_per_sub: usize,
    /// Falls back to the experiment seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

mod defaults {
    pub fn n_super() -> usize {
        20
    }
    pub fn n_sub_per_super() -> usize {
        5
    }
    pub fn dim() -> usize {
        64
    }
    pub fn sigma_super() -> f64 {
        3.0
    }
    pub fn sigma_sub() -> f64 {
        1.0
    }
    pub fn sigma_noise() -> f64 {
        0.5
    }
    pub fn samples_per_sub() -> usize {
        100
    }
    pub fn missing() -> Vec<String> {
        vec![String::new(), "?".into()]
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_super: defaults::n_super(),
            n_sub_per_super: defaults::n_sub_per_super(),
            dim: defaults::dim(),
            sigma_super: defaults::sigma_super(),
            sigma_sub: defaults::sigma_sub(),
            sigma_noise: defaults::sigma_noise(),
            samples_per_sub: defaults::samples_per_sub(),
            seed: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_super < 2 || self.n_sub_per_super < 2 {
            return Err(DataError::InvalidSpec("need n_super >= 2 and n_sub_per_super >= 2".into()));
        }
        if self.dim == 0 || self.samples_per_sub == 0 {
            return Err(DataError::InvalidSpec("dim and samples_per_sub must be >= 1".into()));
        }
        if !(self.sigma_super > 0.0 && self.sigma_sub > 0.0 && self.sigma_noise >= 0.0) {
            return Err(DataError::InvalidSpec("sigmas must be positive (noise may be 0)".into()));
        }
        Ok(())
    }

    pub fn n_sensitive(&self) -> usize {
        self.n_super * self.n_sub_per_super
    }
}

/// Target = superclass, sensitive = global subclass index; the grouping maps
/// each subclass to its superclass.
pub fn generate_hierarchical_gaussian(spec: &SyntheticSpec, seed: u64) -> Result<LabeledDataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(seed));
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let draw = |rng: &mut ChaCha8Rng, scale: f64| -> Vec<f64> {
        (0..spec.dim).map(|_| scale * std_normal.sample(rng)).collect()
    };
    let n_sens = spec.n_sensitive();
    let rows = n_sens * spec.samples_per_sub;
    let mut features = Matrix::zeros((rows, spec.dim));
    let mut target = Vec::with_capacity(rows);
    let mut sensitive = Vec::with_capacity(rows);
    let mut r = 0;
    for sup in 0..spec.n_super {
        let c_sup = draw(&mut rng, spec.sigma_super);
        for sub in 0..spec.n_sub_per_super {
            let off = draw(&mut rng, spec.sigma_sub);
            let center: Vec<f64> = c_sup.iter().zip(&off).map(|(a, b)| a + b).collect();
            for _ in 0..spec.samples_per_sub {
                let mut row = features.row_mut(r);
                if spec.sigma_noise > 0.0 {
                    let noise = draw(&mut rng, spec.sigma_noise);
                    for ((x, c), e) in row.iter_mut().zip(&center).zip(noise) {
                        *x = c + e;
                    }
                } else {
                    row.iter_mut().zip(&center).for_each(|(x, c)| *x = *c);
                }
                target.push(sup);
                sensitive.push(sup * spec.n_sub_per_super + sub);
                r += 1;
            }
        }
    }
    let grouping = LabelGrouping::new((0..n_sens).map(|c| c / spec.n_sub_per_super).collect())
        .map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    LabeledDataset::new(features, target, sensitive, spec.n_super, n_sens, Some(grouping))
}

/// Column roles for tabular ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSchema {
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    pub target: String,
    /// Target values mapped to class 1; everything else is class 0.
    pub target_positive: Vec<String>,
    pub sensitive: String,
    /// Cell values treated as missing (compared after trimming).
    #[serde(default = "defaults::missing")]
    pub missing_values: Vec<String>,
    /// Column names for a file without a header row (e.g. the raw UCI
    /// `adult.data`). When absent the first row is the header.
    #[serde(default)]
    pub column_names: Option<Vec<String>>,
}

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of `columns` over `features`.
    /// Constant columns get a unit scale.
    pub fn fit(features: &Matrix, columns: Vec<usize>) -> Self {
        let n = features.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(columns.len());
        let mut std = Vec::with_capacity(columns.len());
        for &c in &columns {
            let col = features.column(c);
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { columns, mean, std }
    }

    pub fn apply(&self, features: &mut Matrix) {
        for ((&c, &m), &s) in self.columns.iter().zip(&self.mean).zip(&self.std) {
            features.column_mut(c).mapv_inplace(|v| (v - m) / s);
        }
    }
}

/// Result of reading a tabular CSV.
#[derive(Debug, Clone)]
pub struct TabularLoad {
    pub dataset: LabeledDataset,
    pub dropped_rows: usize,
    pub feature_names: Vec<String>,
    /// Feature columns holding numeric (standardizable) values.
    pub numeric_columns: Vec<usize>,
}

/// Reads and encodes a CSV without standardizing it.
///
/// Numeric columns come first in schema order, followed by one one-hot block
/// per categorical column (categories in order of first appearance). Rows
/// with a missing cell in any used column are dropped.
pub fn read_tabular_csv(path: &Path, schema: &TabularSchema) -> Result<TabularLoad, DataError> {
    let file = fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.column_names.is_none())
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file);
    let headers = match &schema.column_names {
        Some(names) => csv::StringRecord::from(names.clone()),
        None => reader.headers()?.clone(),
    };
    if headers.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };
    let numeric_idx: Vec<usize> = schema.numeric.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let cat_idx: Vec<usize> = schema.categorical.iter().map(|n| col(n)).collect::<Result<_, _>>()?;
    let target_idx = col(&schema.target)?;
    let sens_idx = col(&schema.sensitive)?;
    let used: Vec<usize> = numeric_idx
        .iter()
        .chain(&cat_idx)
        .copied()
        .chain([target_idx, sens_idx])
        .collect();

    let mut kept: Vec<csv::StringRecord> = Vec::new();
    let mut total = 0;
    for rec in reader.records() {
        let rec = rec?;
        total += 1;
        let missing = used
            .iter()
            .any(|&i| schema.missing_values.iter().any(|m| rec.get(i).unwrap_or("") == m));
        if !missing {
            kept.push(rec);
        }
    }
    if total == 0 {
        return Err(DataError::EmptyDataset);
    }
    if kept.is_empty() {
        return Err(DataError::AllRowsDropped(total));
    }

    let mut vocab: Vec<Vec<String>> = vec![Vec::new(); cat_idx.len()];
    let mut lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); cat_idx.len()];
    let mut sens_vocab: Vec<String> = Vec::new();
    let mut sens_lookup: HashMap<String, usize> = HashMap::new();
    for rec in &kept {
        for (k, &i) in cat_idx.iter().enumerate() {
            let v = &rec[i];
            if !lookup[k].contains_key(v) {
                lookup[k].insert(v.to_string(), vocab[k].len());
                vocab[k].push(v.to_string());
            }
        }
        let s = &rec[sens_idx];
        if !sens_lookup.contains_key(s) {
            sens_lookup.insert(s.to_string(), sens_vocab.len());
            sens_vocab.push(s.to_string());
        }
    }

    let mut names: Vec<String> = schema.numeric.clone();
    for (k, c) in schema.categorical.iter().enumerate() {
        names.extend(vocab[k].iter().map(|v| format!("{c}={v}")));
    }
    let dim = names.len();
    let mut features = Matrix::zeros((kept.len(), dim));
    let mut target = Vec::with_capacity(kept.len());
    let mut sensitive = Vec::with_capacity(kept.len());
    for (r, rec) in kept.iter().enumerate() {
        for (k, &i) in numeric_idx.iter().enumerate() {
            let raw = &rec[i];
            features[[r, k]] = raw.parse::<f64>().map_err(|_| DataError::ParseNumber {
                row: r,
                column: schema.numeric[k].clone(),
                value: raw.to_string(),
            })?;
        }
        let mut offset = numeric_idx.len();
        for (k, &i) in cat_idx.iter().enumerate() {
            features[[r, offset + lookup[k][&rec[i]]]] = 1.0;
            offset += vocab[k].len();
        }
        target.push(usize::from(schema.target_positive.iter().any(|p| p == &rec[target_idx])));
        sensitive.push(sens_lookup[&rec[sens_idx]]);
    }
    let dataset = LabeledDataset::new(features, target, sensitive, 2, sens_vocab.len().max(2), None)?;
    Ok(TabularLoad {
        dataset,
        dropped_rows: total - kept.len(),
        feature_names: names,
        numeric_columns: (0..numeric_idx.len()).collect(),
    })
}

/// Reads a CSV and standardizes its numeric columns with statistics from
/// the file itself (the file is treated as a training split).
pub fn load_tabular_csv(path: &Path, schema: &TabularSchema) -> Result<TabularLoad, DataError> {
    let mut load = read_tabular_csv(path, schema)?;
    let st = Standardizer::fit(&load.dataset.features, load.numeric_columns.clone());
    st.apply(&mut load.dataset.features);
    Ok(load)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let f = self.as_array();
        if f.iter().any(|&x| x.is_nan() || x <= 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidFractions(f));
        }
        Ok(())
    }
}

/// Integer counts for `n` items with floor/ceil of each ideal share, handing
/// the leftover units to the splits furthest behind their running ideal.
fn apportion(n: usize, fractions: &[f64; 3], carry: &mut [f64; 3]) -> [usize; 3] {
    let ideal: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut out = [0usize; 3];
    for j in 0..3 {
        out[j] = (ideal[j] + 1e-9).floor() as usize;
    }
    let mut rest = n - out.iter().sum::<usize>().min(n);
    while rest > 0 {
        let mut best = None;
        for j in 0..3 {
            if (out[j] as f64) < ideal[j] + 1e-9 {
                let need = carry[j] + ideal[j] - out[j] as f64;
                if best.is_none_or(|(_, b)| need > b) {
                    best = Some((j, need));
                }
            }
        }
        let j = best.map_or(0, |(j, _)| j);
        out[j] += 1;
        rest -= 1;
    }
    for j in 0..3 {
        carry[j] += ideal[j] - out[j] as f64;
    }
    out
}

/// Stratified train/val/test split.
///
/// Per-sensitive-class counts are the floor or ceiling of each class's ideal
/// share. Within a class, rows are further stratified by target label when
/// every (target, sensitive) pair has at least three rows.
pub fn split(dataset: &LabeledDataset, fractions: SplitFractions, seed: u64) -> Result<Splits, DataError> {
    fractions.validate()?;
    let f = fractions.as_array();
    let needed = 3;
    let mut by_class: BTreeMap<usize, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
    for (r, (&s, &t)) in dataset.sensitive_labels.iter().zip(&dataset.target_labels).enumerate() {
        by_class.entry(s).or_default().entry(t).or_default().push(r);
    }
    for (&class, strata) in &by_class {
        let count: usize = strata.values().map(Vec::len).sum();
        if count < needed {
            return Err(DataError::ClassTooSmall { class, count, needed });
        }
    }
    let pairs_ok = by_class.values().flat_map(|m| m.values()).all(|v| v.len() >= needed);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut carry = [0.0; 3];
    for strata in by_class.values() {
        let mut rows: Vec<usize> = Vec::new();
        for g in strata.values() {
            let mut g = g.clone();
            g.shuffle(&mut rng);
            rows.extend(g);
        }
        if !pairs_ok {
            rows.shuffle(&mut rng);
        }
        let n = rows.len();
        let mut counts = apportion(n, &f, &mut carry);
        if counts[0] == 0 {
            // Every class must be seen in training.
            let j = if counts[1] >= counts[2] { 1 } else { 2 };
            counts[j] -= 1;
            counts[0] += 1;
            carry[j] += 1.0;
            carry[0] -= 1.0;
        }
        // Interleave so that each target stratum (a contiguous block of
        // `rows`) is spread across the splits in proportion.
        let mut given = [0usize; 3];
        for (i, r) in rows.into_iter().enumerate() {
            let due = |j: usize| counts[j] as f64 * (i + 1) as f64 / n as f64 - given[j] as f64;
            let mut pick = None;
            for j in 0..3 {
                if given[j] < counts[j] && pick.is_none_or(|p| due(j) > due(p)) {
                    pick = Some(j);
                }
            }
            let j = pick.expect("counts sum to n");
            parts[j].push(r);
            given[j] += 1;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(Splits {
        train: dataset.subset(&train),
        val: dataset.subset(&val),
        test: dataset.subset(&test),
    })
}

const CACHE_MAGIC: &[u8; 4] = b"FSDS";
const CACHE_VERSION: u32 = 1;

/// Little-endian binary encoding of a dataset.
pub fn encode_cache(ds: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + ds.features.len() * 8 + ds.len() * 24);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    for v in [ds.len(), ds.dim(), ds.n_target_classes, ds.n_sensitive_classes] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    match &ds.grouping {
        Some(g) => {
            out.push(1);
            for &x in g.groups() {
                out.extend_from_slice(&(x as u64).to_le_bytes());
            }
        }
        None => out.push(0),
    }
    for v in ds.features.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for labels in [&ds.target_labels, &ds.sensitive_labels, &ds.ids] {
        for &v in labels {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| DataError::Cache("truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn word(&mut self) -> Result<[u8; 8], DataError> {
        Ok(self.take(8)?.try_into().expect("8 bytes"))
    }

    fn usizes(&mut self, n: usize) -> Result<Vec<usize>, DataError> {
        (0..n).map(|_| Ok(u64::from_le_bytes(self.word()?) as usize)).collect()
    }
}

pub fn decode_cache(bytes: &[u8]) -> Result<LabeledDataset, DataError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != CACHE_MAGIC {
        return Err(DataError::Cache("not a dataset cache".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }
    let head = c.usizes(4)?;
    let (rows, cols, n_t, n_s) = (head[0], head[1], head[2], head[3]);
    let has_grouping = c.take(1)?[0] == 1;
    let grouping = if has_grouping {
        Some(LabelGrouping::new(c.usizes(n_s)?).map_err(|e| DataError::Cache(e.to_string()))?)
    } else {
        None
    };
    let cells = rows
        .checked_mul(cols)
        .filter(|&n| n <= bytes.len() / 8)
        .ok_or_else(|| DataError::Cache("truncated".into()))?;
    let data: Vec<f64> = (0..cells)
        .map(|_| Ok(f64::from_le_bytes(c.word()?)))
        .collect::<Result<_, DataError>>()?;
    let features = Matrix::from_shape_vec((rows, cols), data).map_err(|e| DataError::Cache(e.to_string()))?;
    let target = c.usizes(rows)?;
    let sensitive = c.usizes(rows)?;
    let ids = c.usizes(rows)?;
    if c.pos != bytes.len() {
        return Err(DataError::Cache("trailing bytes".into()));
    }
    let mut ds = LabeledDataset::new(features, target, sensitive, n_t, n_s, grouping)?;
    ds.ids = ids;
    Ok(ds)
}

pub fn write_cache(path: &Path, ds: &LabeledDataset) -> Result<(), DataError> {
    fs::write(path, encode_cache(ds)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_cache(path: &Path) -> Result<LabeledDataset, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_cache(&bytes)
}
