//! Batch runs over a dataset and the machine-readable report they produce.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attack::{
    generate_initial, run_multistart, start_rng, AttackConfig, AttackError, AttackRecord,
};
use crate::baselines::{
    exact_oracle_with_cap, naive_feature_attack, naive_leaf_attack, NaiveOutcome,
    DEFAULT_ORACLE_CAP,
};
use crate::data::{load_dataset, DataError, DataOptions, Dataset};
use crate::ensemble::{ModelError, TreeEnsemble};
use crate::model_io::{load_model, LoadOptions};

/// Version of the report layout below.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("cannot build thread pool: {0}")]
    Pool(String),
    #[error("data has {got} features, model expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Lt,
    NaiveLeaf,
    NaiveFeature,
    Oracle,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Lt => "lt",
            AttackKind::NaiveLeaf => "naive-leaf",
            AttackKind::NaiveFeature => "naive-feature",
            AttackKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lt" => Ok(AttackKind::Lt),
            "naive-leaf" => Ok(AttackKind::NaiveLeaf),
            "naive-feature" => Ok(AttackKind::NaiveFeature),
            "oracle" => Ok(AttackKind::Oracle),
            _ => Err(format!("unknown attack {s:?}")),
        }
    }
}

/// Default success-rate thresholds: 0.01 to 0.23 in steps of 0.01.
pub fn default_thresholds() -> Vec<f64> {
    (1..=23).map(|i| i as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub attack: AttackKind,
    pub attack_config: AttackConfig,
    /// Attack only the first this many examples; all when `None`.
    pub num_examples: Option<usize>,
    /// Worker threads; 0 uses one per core. Does not affect results.
    pub threads: usize,
    pub oracle_cap: u64,
    pub thresholds: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            attack: AttackKind::Lt,
            attack_config: AttackConfig::default(),
            num_examples: None,
            threads: 0,
            oracle_cap: DEFAULT_ORACLE_CAP,
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Fingerprint {
    pub fn of_file<P: AsRef<Path>>(path: P) -> Result<Fingerprint, BenchError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Fingerprint {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        })
    }
}

/// Flat per-example row; the CSV report has exactly these columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub example: usize,
    pub label: usize,
    pub predicted: usize,
    pub success: bool,
    pub already_misclassified: bool,
    pub adversarial_class: Option<usize>,
    pub distance: Option<f64>,
    pub infimum: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub linf: Option<f64>,
    pub initial_distance: Option<f64>,
    pub iterations: u64,
    pub mean_bound_trees: f64,
    pub mean_neighbor_bound: f64,
    pub mean_tree_neighbors: f64,
    pub failed_starts: usize,
    pub noise_trials: u64,
    pub noise_improvements: u64,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

impl From<&AttackRecord> for ReportRow {
    fn from(r: &AttackRecord) -> Self {
        ReportRow {
            example: r.example,
            label: r.label,
            predicted: r.predicted,
            success: r.success,
            already_misclassified: r.already_misclassified,
            adversarial_class: r.adversarial_class,
            distance: r.distance,
            infimum: r.infimum,
            l1: r.distances.map(|d| d.l1),
            l2: r.distances.map(|d| d.l2),
            linf: r.distances.map(|d| d.linf),
            initial_distance: r.initial_distance,
            iterations: r.stats.iterations,
            mean_bound_trees: r.mean_bound_trees,
            mean_neighbor_bound: r.mean_neighbor_bound,
            mean_tree_neighbors: r.mean_tree_neighbors,
            failed_starts: r.failed_starts,
            noise_trials: r.noise_trials,
            noise_improvements: r.noise_improvements,
            wall_time_ms: r.wall_time_ms,
            error: r.error.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub threshold: f64,
    /// Fraction of all examples with a successful attack of distance at
    /// most `threshold`.
    pub success_rate: f64,
}

/// Aggregates over the per-example rows. Means over "attacked" rows cover
/// successful attacks on examples that were classified correctly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub num_examples: usize,
    pub num_success: usize,
    pub num_already_misclassified: usize,
    pub num_failed: usize,
    pub success_rate: f64,
    pub mean_distance: Option<f64>,
    pub mean_l1: Option<f64>,
    pub mean_l2: Option<f64>,
    pub mean_linf: Option<f64>,
    pub mean_initial_distance: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub mean_bound_trees: Option<f64>,
    pub mean_neighbor_bound: Option<f64>,
    pub mean_tree_neighbors: Option<f64>,
    pub mean_wall_time_ms: Option<f64>,
}

fn mean<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(rows: &[ReportRow]) -> Summary {
    let attacked: Vec<&ReportRow> = rows
        .iter()
        .filter(|r| r.success && !r.already_misclassified)
        .collect();
    let num_success = rows.iter().filter(|r| r.success).count();
    let over = |f: &dyn Fn(&ReportRow) -> Option<f64>| mean(attacked.iter().filter_map(|r| f(r)));
    Summary {
        num_examples: rows.len(),
        num_success,
        num_already_misclassified: rows.iter().filter(|r| r.already_misclassified).count(),
        num_failed: rows.len() - num_success,
        success_rate: if rows.is_empty() {
            0.0
        } else {
            num_success as f64 / rows.len() as f64
        },
        mean_distance: over(&|r| r.distance),
        mean_l1: over(&|r| r.l1),
        mean_l2: over(&|r| r.l2),
        mean_linf: over(&|r| r.linf),
        mean_initial_distance: over(&|r| r.initial_distance),
        mean_iterations: over(&|r| Some(r.iterations as f64)),
        mean_bound_trees: over(&|r| Some(r.mean_bound_trees)),
        mean_neighbor_bound: over(&|r| Some(r.mean_neighbor_bound)),
        mean_tree_neighbors: over(&|r| Some(r.mean_tree_neighbors)),
        mean_wall_time_ms: over(&|r| Some(r.wall_time_ms)),
    }
}

/// Empirical distribution of final distances at each threshold.
pub fn success_grid(rows: &[ReportRow], thresholds: &[f64]) -> Vec<GridPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let hits = rows
                .iter()
                .filter(|r| r.success && r.distance.is_some_and(|d| d <= t))
                .count();
            GridPoint {
                threshold: t,
                success_rate: if rows.is_empty() {
                    0.0
                } else {
                    hits as f64 / rows.len() as f64
                },
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub config: BenchConfig,
    pub model: Option<Fingerprint>,
    pub data: Option<Fingerprint>,
    pub num_features: usize,
    pub num_classes: usize,
    pub num_trees: usize,
    pub examples: Vec<AttackRecord>,
    pub summary: Summary,
    pub success_grid: Vec<GridPoint>,
}

impl BenchmarkReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.examples.iter().map(ReportRow::from).collect()
    }

    /// Copy with every timing field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> BenchmarkReport {
        let mut r = self.clone();
        for e in &mut r.examples {
            e.wall_time_ms = 0.0;
        }
        r.summary.mean_wall_time_ms = r.summary.mean_wall_time_ms.map(|_| 0.0);
        r
    }
}

fn naive_record(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    cfg: &BenchConfig,
    example: usize,
    record: &mut AttackRecord,
) {
    let ac = &cfg.attack_config;
    let mut best: Option<(usize, NaiveOutcome, f64)> = None;
    let mut iterations = 0;
    for s in 0..ac.num_initial {
        let mut rng = start_rng(ac.seed, example as u64, s as u64);
        let Ok(init) = generate_initial(ensemble, x0, y0, ac, &mut rng) else {
            record.failed_starts += 1;
            continue;
        };
        let out = match cfg.attack {
            AttackKind::NaiveLeaf => {
                naive_leaf_attack(ensemble, x0, y0, &init.point, ac.norm, ac.epsilon)
            }
            _ => naive_feature_attack(ensemble, x0, y0, &init.point, ac.norm, ac.epsilon),
        };
        let Ok(out) = out else {
            record.failed_starts += 1;
            continue;
        };
        iterations += out.iterations;
        if out.verified && best.as_ref().is_none_or(|(_, b, _)| out.key < b.key) {
            let d0 = ac.norm.distance(&init.point, x0);
            best = Some((s, out, d0));
        }
    }
    record.stats.iterations = iterations;
    match best {
        Some((s, out, d0)) => {
            record.best_start = Some(s);
            record.initial_distance = Some(d0);
            record.infimum = Some(out.key.value(ac.norm));
            record.key = Some(out.key);
            let class = ensemble.predict_class(&out.point);
            record.tuple = Some(out.tuple);
            record.set_point(x0, out.point, class);
        }
        None => record.error = Some(AttackError::AllStartsFailed.to_string()),
    }
}

fn attack_example(
    ensemble: &TreeEnsemble,
    x0: &[f64],
    y0: usize,
    cfg: &BenchConfig,
    example: usize,
) -> AttackRecord {
    let t0 = Instant::now();
    let norm = cfg.attack_config.norm;
    let predicted = ensemble.predict_class(x0);
    let mut record = match cfg.attack {
        AttackKind::Lt => match run_multistart(ensemble, x0, y0, &cfg.attack_config, example) {
            Ok(r) => r,
            Err(e) => {
                let mut r = AttackRecord::unsolved(example, y0, predicted, norm);
                r.error = Some(e.to_string());
                if e == AttackError::AllStartsFailed {
                    r.failed_starts = cfg.attack_config.num_initial;
                }
                r
            }
        },
        _ if predicted != y0 => {
            let mut r = AttackRecord::unsolved(example, y0, predicted, norm);
            r.already_misclassified = true;
            r.set_point(x0, x0.to_vec(), predicted);
            r.infimum = Some(0.0);
            r.initial_distance = Some(0.0);
            r
        }
        AttackKind::Oracle => {
            let mut r = AttackRecord::unsolved(example, y0, predicted, norm);
            match exact_oracle_with_cap(
                ensemble,
                x0,
                y0,
                norm,
                cfg.oracle_cap,
                cfg.attack_config.epsilon,
            ) {
                Ok(o) => {
                    r.infimum = Some(o.distance);
                    r.key = Some(o.key);
                    r.tuple = Some(o.tuple);
                    let class = ensemble.predict_class(&o.point);
                    if class != y0 {
                        r.set_point(x0, o.point, class);
                    } else {
                        r.error = Some("materialized optimum is not adversarial".into());
                    }
                }
                Err(e) => r.error = Some(e.to_string()),
            }
            r
        }
        AttackKind::NaiveLeaf | AttackKind::NaiveFeature => {
            let mut r = AttackRecord::unsolved(example, y0, predicted, norm);
            naive_record(ensemble, x0, y0, cfg, example, &mut r);
            r
        }
    };
    record.wall_time_ms = t0.elapsed().as_secs_f64() * 1e3;
    record
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Attacks the examples of an in-memory dataset.
pub fn run_benchmark_on(
    ensemble: &TreeEnsemble,
    data: &Dataset,
    cfg: &BenchConfig,
) -> Result<BenchmarkReport, BenchError> {
    cfg.attack_config.validate()?;
    if let Some(x) = data
        .features
        .iter()
        .find(|x| x.len() != ensemble.num_features())
    {
        return Err(BenchError::FeatureMismatch {
            expected: ensemble.num_features(),
            got: x.len(),
        });
    }
    let n = cfg.num_examples.map_or(data.len(), |k| k.min(data.len()));
    let examples: Vec<AttackRecord> = with_pool(cfg.threads, || {
        (0..n)
            .into_par_iter()
            .map(|i| attack_example(ensemble, &data.features[i], data.labels[i], cfg, i))
            .collect()
    })?;
    let rows: Vec<ReportRow> = examples.iter().map(ReportRow::from).collect();
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        model: None,
        data: None,
        num_features: ensemble.num_features(),
        num_classes: ensemble.num_classes(),
        num_trees: ensemble.num_trees(),
        summary: summarize(&rows),
        success_grid: success_grid(&rows, &cfg.thresholds),
        examples,
    })
}

/// Loads a model and a dataset and attacks the dataset's examples.
/// `index_base` is the first feature index of LIBSVM files.
pub fn run_benchmark<P: AsRef<Path>, Q: AsRef<Path>>(
    model_path: P,
    data_path: Q,
    cfg: &BenchConfig,
    load: &LoadOptions,
    index_base: usize,
) -> Result<BenchmarkReport, BenchError> {
    let ensemble = load_model(&model_path, load)?;
    let opts = DataOptions {
        index_base,
        num_features: ensemble.num_features(),
        num_classes: ensemble.num_classes(),
    };
    let data = load_dataset(&data_path, &opts)?;
    let mut report = run_benchmark_on(&ensemble, &data, cfg)?;
    report.model = Some(Fingerprint::of_file(&model_path)?);
    report.data = Some(Fingerprint::of_file(&data_path)?);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// CSV for a `.csv` extension, JSON otherwise.
    pub fn for_path<P: AsRef<Path>>(path: P) -> ReportFormat {
        if path
            .as_ref()
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        {
            ReportFormat::Csv
        } else {
            ReportFormat::Json
        }
    }
}

pub fn report_to_json(report: &BenchmarkReport) -> Result<String, BenchError> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ReportRow>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<ReportRow>, _>>()?)
}

pub fn emit_report<P: AsRef<Path>>(
    report: &BenchmarkReport,
    format: ReportFormat,
    path: P,
) -> Result<(), BenchError> {
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => rows_to_csv(&report.rows())?,
    };
    let path = path.as_ref();
    fs::write(path, text).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_report_json<P: AsRef<Path>>(path: P) -> Result<BenchmarkReport, BenchError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
