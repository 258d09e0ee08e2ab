//! Experiment specifications, repeated-seed runs, sweeps and timing benches.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::causal::Variant;
use crate::error::{Error, Result};
use crate::graph::{
    build_temporal_graph_with, generate_synthetic, load_generic_graph, load_transactions_csv, stratified_split,
    temporal_split, ColumnMapping, DatasetSplit, MultiRelationGraph, SplitRatios, SynthConfig, TemporalGraphConfig,
};
use crate::metrics::{mean_std, EvalResult};
use crate::model::{save_checkpoint, ModelConfig};
use crate::trainer::{train, TrainConfig, TrainReport, WorkCounters};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn default_time_cut() -> f64 {
    0.7
}

fn default_valid_fraction() -> f64 {
    1.0 / 3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// A fresh planted graph per seed.
    Synthetic {
        #[serde(default)]
        config: SynthConfig,
    },
    /// Pre-built graph files; stratified split unless `split_file` is given.
    Generic {
        features: PathBuf,
        labels: PathBuf,
        edges: Vec<PathBuf>,
        #[serde(default)]
        split: SplitRatios,
        #[serde(default)]
        split_seed: u64,
        #[serde(default)]
        split_file: Option<PathBuf>,
    },
    /// Raw transactions turned into a temporal graph, split by time.
    Transactions {
        path: PathBuf,
        #[serde(default)]
        columns: ColumnMapping,
        #[serde(default)]
        graph: TemporalGraphConfig,
        /// Fraction of the time range used for training and validation.
        #[serde(default = "default_time_cut")]
        time_cut: f64,
        /// Share of the early labeled nodes held out for validation.
        #[serde(default = "default_valid_fraction")]
        valid_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            config: SynthConfig::default(),
        }
    }
}

impl DatasetSpec {
    /// Resolves relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetSpec::Synthetic { .. } => {}
            DatasetSpec::Generic {
                features,
                labels,
                edges,
                split_file,
                ..
            } => {
                fix(features);
                fix(labels);
                edges.iter_mut().for_each(fix);
                if let Some(p) = split_file {
                    fix(p);
                }
            }
            DatasetSpec::Transactions { path, .. } => fix(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub variants: Vec<Variant>,
    /// Each seed seeds training and, for synthetic data, the graph itself.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub save_checkpoints: bool,
    /// Timed repetitions per variant in `bench`; the minimum is reported.
    pub bench_repeats: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            variants: vec![Variant::Pl],
            seeds: (0..5).collect(),
            output_dir: PathBuf::from("results"),
            save_checkpoints: true,
            bench_repeats: 1,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ExperimentSpec = serde_json::from_str(&text)?;
        spec.dataset.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.variants.is_empty() {
            return Err(Error::InvalidInput("at least one variant is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("at least one seed is required".into()));
        }
        if has_duplicates(&self.variants) || has_duplicates(&self.seeds) {
            return Err(Error::InvalidInput("variants and seeds must not repeat".into()));
        }
        if self.bench_repeats == 0 {
            return Err(Error::InvalidInput("bench_repeats must be positive".into()));
        }
        match &self.dataset {
            DatasetSpec::Synthetic { config } => config.validate(),
            DatasetSpec::Generic { split, split_file, .. } if split_file.is_none() => split.validate(),
            DatasetSpec::Generic { .. } => Ok(()),
            DatasetSpec::Transactions {
                time_cut,
                valid_fraction,
                graph,
                ..
            } => {
                if !(0.0..=1.0).contains(time_cut) || !(0.0..1.0).contains(valid_fraction) {
                    return Err(Error::InvalidInput(format!(
                        "time_cut={time_cut} must be in [0,1] and valid_fraction={valid_fraction} in [0,1)"
                    )));
                }
                if graph.window <= 0 || graph.max_neighbors == 0 {
                    return Err(Error::InvalidInput("window and max_neighbors must be positive".into()));
                }
                Ok(())
            }
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EnvRatio,
    TrainRatio,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::EnvRatio => "env_ratio",
            SweepAxis::TrainRatio => "train_ratio",
        }
    }

    pub fn validate_grid(self, grid: &[f64]) -> Result<()> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("sweep grid is empty".into()));
        }
        if has_duplicates(grid) {
            return Err(Error::InvalidInput("sweep grid values must not repeat".into()));
        }
        for &x in grid {
            let ok = match self {
                SweepAxis::EnvRatio => (0.0..=1.0).contains(&x),
                SweepAxis::TrainRatio => x > 0.0 && x < 1.0,
            };
            if !ok {
                return Err(Error::InvalidInput(format!("{x} is not a valid {} value", self.as_str())));
            }
        }
        Ok(())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "env_ratio" => Ok(SweepAxis::EnvRatio),
            "train_ratio" => Ok(SweepAxis::TrainRatio),
            _ => Err(Error::InvalidInput(format!("unknown sweep axis `{s}`"))),
        }
    }
}

/// Loaded data that can produce a (graph, split) pair per seed.
pub enum DataSource {
    Synthetic(SynthConfig),
    Fixed {
        graph: Rc<MultiRelationGraph>,
        split: SplitPolicy,
    },
}

pub enum SplitPolicy {
    Stratified { ratios: SplitRatios, seed: u64 },
    Given(DatasetSplit),
    Temporal {
        times: Vec<i64>,
        cut: f64,
        valid_fraction: f64,
        seed: u64,
    },
}

impl DataSource {
    pub fn load(spec: &DatasetSpec) -> Result<Self> {
        Ok(match spec {
            DatasetSpec::Synthetic { config } => DataSource::Synthetic(config.clone()),
            DatasetSpec::Generic {
                features,
                labels,
                edges,
                split,
                split_seed,
                split_file,
            } => {
                let graph = load_generic_graph(features, labels, edges)?;
                let split = match split_file {
                    Some(path) => {
                        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                        let given: DatasetSplit = serde_json::from_str(&text)?;
                        given.validate(&graph)?;
                        SplitPolicy::Given(given)
                    }
                    None => SplitPolicy::Stratified {
                        ratios: *split,
                        seed: *split_seed,
                    },
                };
                DataSource::Fixed {
                    graph: Rc::new(graph),
                    split,
                }
            }
            DatasetSpec::Transactions {
                path,
                columns,
                graph,
                time_cut,
                valid_fraction,
                split_seed,
            } => {
                let records = load_transactions_csv(path, columns)?;
                let times = records.iter().map(|r| r.time).collect();
                DataSource::Fixed {
                    graph: Rc::new(build_temporal_graph_with(&records, graph)?),
                    split: SplitPolicy::Temporal {
                        times,
                        cut: *time_cut,
                        valid_fraction: *valid_fraction,
                        seed: *split_seed,
                    },
                }
            }
        })
    }

    /// The data for one seed. `train_ratio` overrides the split proportions
    /// (validation gets a third of the remainder) or, for temporal splits, the
    /// time cut.
    pub fn instance(&self, seed: u64, train_ratio: Option<f64>) -> Result<(Rc<MultiRelationGraph>, DatasetSplit)> {
        match self {
            DataSource::Synthetic(config) => {
                let mut config = config.clone();
                if let Some(t) = train_ratio {
                    config.split = SplitRatios::with_train(t);
                }
                let (graph, split) = generate_synthetic(&config, seed)?;
                Ok((Rc::new(graph), split))
            }
            DataSource::Fixed { graph, split } => {
                let split = match (split, train_ratio) {
                    (SplitPolicy::Given(s), None) => s.clone(),
                    (SplitPolicy::Given(_), Some(t)) => stratified_split(graph.labels(), SplitRatios::with_train(t), 0)?,
                    (SplitPolicy::Stratified { ratios, seed }, t) => {
                        let ratios = t.map(SplitRatios::with_train).unwrap_or(*ratios);
                        stratified_split(graph.labels(), ratios, *seed)?
                    }
                    (
                        SplitPolicy::Temporal {
                            times,
                            cut,
                            valid_fraction,
                            seed,
                        },
                        t,
                    ) => temporal_split(times, graph.labels(), t.unwrap_or(*cut), *valid_fraction, *seed)?,
                };
                Ok((graph.clone(), split))
            }
        }
    }
}

/// One training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: Variant,
    pub axis_value: Option<f64>,
    pub seed: u64,
    pub test: EvalResult,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub work: WorkCounters,
    pub seconds: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Mean and sample standard deviation over seeds for one variant and grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: Variant,
    pub axis: Option<SweepAxis>,
    pub axis_value: Option<f64>,
    pub env_ratio: f64,
    pub causal_ratio: f64,
    pub fixed_env_count: usize,
    pub weight_mode: String,
    pub seeds: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub ap_mean: f64,
    pub ap_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub rows: Vec<MetricsRow>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentOutcome {
    pub fn row(&self, variant: Variant, axis_value: Option<f64>) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.variant == variant && r.axis_value == axis_value)
    }
}

/// Model configuration for one variant at one grid point.
pub fn variant_config(base: &ModelConfig, variant: Variant, axis: Option<SweepAxis>, value: Option<f64>) -> ModelConfig {
    let mut config = ModelConfig {
        variant,
        ..base.clone()
    };
    if let (Some(SweepAxis::EnvRatio), Some(v)) = (axis, value) {
        config.env_ratio = v;
    }
    config
}

/// Trains every variant on every seed, once per grid point (or once without a sweep).
pub fn run_grid(spec: &ExperimentSpec, sweep: Option<(SweepAxis, &[f64])>) -> Result<ExperimentOutcome> {
    spec.validate()?;
    if let Some((axis, grid)) = sweep {
        axis.validate_grid(grid)?;
    }
    let source = DataSource::load(&spec.dataset)?;
    let points: Vec<Option<f64>> = match sweep {
        Some((_, grid)) => grid.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let axis = sweep.map(|(a, _)| a);
    let ckpt_dir = spec.output_dir.join("checkpoints");
    if spec.save_checkpoints {
        fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    }

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &point in &points {
        let train_ratio = if axis == Some(SweepAxis::TrainRatio) { point } else { None };
        let data: Vec<_> = spec
            .seeds
            .iter()
            .map(|&s| source.instance(s, train_ratio))
            .collect::<Result<_>>()?;
        for &variant in &spec.variants {
            let config = variant_config(&spec.model, variant, axis, point);
            let mut results = Vec::with_capacity(spec.seeds.len());
            for (&seed, (graph, split)) in spec.seeds.iter().zip(&data) {
                let tc = TrainConfig {
                    seed,
                    ..spec.train.clone()
                };
                let started = Instant::now();
                let (params, report) = train(graph, split, &config, &tc)?;
                let seconds = started.elapsed().as_secs_f64();
                let test = report.test.ok_or_else(|| {
                    Error::UndefinedMetric(format!("test split for seed {seed} does not contain both classes"))
                })?;
                let checkpoint = if spec.save_checkpoints {
                    let name = match point {
                        Some(v) => format!("{variant}_{}-{v}_seed{seed}.json", axis.map_or("", SweepAxis::as_str)),
                        None => format!("{variant}_seed{seed}.json"),
                    };
                    let path = ckpt_dir.join(name);
                    save_checkpoint(&path, &params, &config)?;
                    Some(path)
                } else {
                    None
                };
                results.push(test);
                runs.push(RunRecord {
                    variant,
                    axis_value: point,
                    seed,
                    test,
                    best_epoch: report.best_epoch,
                    epochs_run: report.epochs.len(),
                    stopped_early: report.stopped_early,
                    work: report.work,
                    seconds,
                    checkpoint,
                });
            }
            rows.push(summarize(&config, axis, point, &results));
        }
    }
    Ok(ExperimentOutcome { rows, runs })
}

fn summarize(config: &ModelConfig, axis: Option<SweepAxis>, point: Option<f64>, results: &[EvalResult]) -> MetricsRow {
    let stat = |f: fn(&EvalResult) -> f64| mean_std(&results.iter().map(f).collect::<Vec<_>>());
    let (auc_mean, auc_std) = stat(|r| r.auc);
    let (f1_mean, f1_std) = stat(|r| r.f1_macro);
    let (ap_mean, ap_std) = stat(|r| r.ap);
    MetricsRow {
        variant: config.variant,
        axis,
        axis_value: point,
        env_ratio: config.env_ratio,
        causal_ratio: config.causal_ratio,
        fixed_env_count: config.fixed_env_count,
        weight_mode: config.variant.weight_mode().map_or("none", |m| m.as_str()).to_string(),
        seeds: results.len(),
        auc_mean,
        auc_std,
        f1_mean,
        f1_std,
        ap_mean,
        ap_std,
    }
}

/// `metrics.csv` contents: `#` comment lines with version, command, seeds and
/// the spec, then one row per variant and grid point. Contains no timings.
pub fn metrics_csv(spec: &ExperimentSpec, command: &str, rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::new();
    let seeds: Vec<String> = spec.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "# catgnn {VERSION}");
    let _ = writeln!(out, "# command: {command}");
    let _ = writeln!(out, "# seeds: {}", seeds.join(","));
    let _ = writeln!(out, "# spec: {}", spec.to_json_line());
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "variant",
        "axis",
        "axis_value",
        "env_ratio",
        "causal_ratio",
        "fixed_env_count",
        "weight_mode",
        "seeds",
        "auc_mean",
        "auc_std",
        "f1_mean",
        "f1_std",
        "ap_mean",
        "ap_std",
    ];
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.variant.to_string(),
            r.axis.map_or(String::new(), |a| a.as_str().to_string()),
            r.axis_value.map_or(String::new(), |v| v.to_string()),
            r.env_ratio.to_string(),
            r.causal_ratio.to_string(),
            r.fixed_env_count.to_string(),
            r.weight_mode.clone(),
            r.seeds.to_string(),
            r.auc_mean.to_string(),
            r.auc_std.to_string(),
            r.f1_mean.to_string(),
            r.f1_std.to_string(),
            r.ap_mean.to_string(),
            r.ap_std.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

#[derive(Serialize)]
struct Report<'a> {
    version: &'a str,
    command: &'a str,
    seeds: &'a [u64],
    spec: &'a ExperimentSpec,
    rows: &'a [MetricsRow],
    runs: &'a [RunRecord],
}

/// Writes `metrics.csv` and `report.json` into the spec's output directory.
pub fn write_outcome(spec: &ExperimentSpec, command: &str, outcome: &ExperimentOutcome) -> Result<(PathBuf, PathBuf)> {
    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(spec, command, &outcome.rows)?).map_err(|e| Error::io(&csv_path, e))?;
    let report = Report {
        version: VERSION,
        command,
        seeds: &spec.seeds,
        spec,
        rows: &outcome.rows,
        runs: &outcome.runs,
    };
    let json_path = dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

/// Training single run, kept with its report, for the `train` command's
/// per-seed report files.
pub fn train_report_path(dir: &Path, variant: Variant, seed: u64) -> PathBuf {
    dir.join(format!("train_{variant}_seed{seed}.json"))
}

pub fn write_train_report(path: &Path, report: &TrainReport) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub variant: Variant,
    /// Fastest of the timed repetitions.
    pub seconds: f64,
    pub repeats: Vec<f64>,
    pub epochs: usize,
    pub work: WorkCounters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: String,
    pub seed: u64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub intervention: BenchEntry,
    pub baseline: BenchEntry,
    /// `100 · (t_PL − t_N_CAT) / t_N_CAT`.
    pub overhead_pct: f64,
    pub spec: ExperimentSpec,
}

/// Times full training of PL against N_CAT on the first seed, with early
/// stopping disabled so both run the same number of steps.
pub fn run_bench(spec: &ExperimentSpec) -> Result<BenchReport> {
    spec.validate()?;
    if let Some(v) = spec.variants.iter().find(|v| !matches!(v, Variant::Pl | Variant::NCat)) {
        return Err(Error::InvalidInput(format!("bench compares PL with N_CAT only, got {v}")));
    }
    let seed = spec.seeds[0];
    let (graph, split) = DataSource::load(&spec.dataset)?.instance(seed, None)?;
    let tc = TrainConfig {
        seed,
        early_stopping: false,
        ..spec.train.clone()
    };
    let mut entries: Vec<BenchEntry> = [Variant::Pl, Variant::NCat]
        .iter()
        .map(|&variant| BenchEntry {
            variant,
            seconds: f64::INFINITY,
            repeats: Vec::new(),
            epochs: 0,
            work: WorkCounters::default(),
        })
        .collect();
    for _ in 0..spec.bench_repeats {
        for entry in entries.iter_mut() {
            let config = variant_config(&spec.model, entry.variant, None, None);
            let started = Instant::now();
            let (_, report) = train(&graph, &split, &config, &tc)?;
            let elapsed = started.elapsed().as_secs_f64();
            entry.repeats.push(elapsed);
            entry.seconds = entry.seconds.min(elapsed);
            entry.epochs = report.epochs.len();
            entry.work = report.work;
        }
    }
    let baseline = entries.pop().expect("two entries");
    let intervention = entries.pop().expect("two entries");
    Ok(BenchReport {
        version: VERSION.to_string(),
        seed,
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_edges(),
        overhead_pct: 100.0 * (intervention.seconds - baseline.seconds) / baseline.seconds,
        intervention,
        baseline,
        spec: spec.clone(),
    })
}

pub fn write_bench(spec: &ExperimentSpec, report: &BenchReport) -> Result<PathBuf> {
    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("bench.json");
    fs::write(&path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_spec(dir: &Path) -> ExperimentSpec {
        ExperimentSpec {
            dataset: DatasetSpec::Synthetic {
                config: SynthConfig {
                    num_nodes: 200,
                    fraud_ratio: 0.2,
                    ..SynthConfig::default()
                },
            },
            model: ModelConfig {
                hidden_dim: 8,
                num_heads: 2,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                epochs: 3,
                batch_size: 64,
                ..TrainConfig::default()
            },
            variants: vec![Variant::Pl, Variant::NCat],
            seeds: vec![1, 2],
            output_dir: dir.to_path_buf(),
            save_checkpoints: false,
            bench_repeats: 1,
        }
    }

    #[test]
    fn spec_json_defaults_fill_in() {
        let spec: ExperimentSpec = serde_json::from_str(r#"{"variants": ["PL", "N_CAT"]}"#).unwrap();
        assert_eq!(spec.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(spec.model, ModelConfig::default());
        let generic: DatasetSpec =
            serde_json::from_str(r#"{"kind": "generic", "features": "f.csv", "labels": "l.csv", "edges": ["a.csv"]}"#)
                .unwrap();
        assert!(matches!(generic, DatasetSpec::Generic { split_seed: 0, .. }));
    }

    #[test]
    fn validation_catches_bad_specs() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = quick_spec(dir.path());
        spec.model.env_ratio = 1.5;
        assert!(matches!(spec.validate(), Err(Error::InvalidInput(_))));
        let mut spec = quick_spec(dir.path());
        spec.seeds.clear();
        assert!(spec.validate().is_err());
        assert!(matches!(SweepAxis::EnvRatio.validate_grid(&[]), Err(Error::InvalidInput(_))));
        assert!(SweepAxis::TrainRatio.validate_grid(&[1.0]).is_err());
        assert!(SweepAxis::EnvRatio.validate_grid(&[0.0, 1.0]).is_ok());
    }

    #[test]
    fn grid_rows_cover_every_variant_and_point() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick_spec(dir.path());
        let out = run_grid(&spec, Some((SweepAxis::EnvRatio, &[0.0, 0.5]))).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert_eq!(out.runs.len(), 8);
        // r_e = 0 makes PL identical to N_CAT for every seed
        for seed in [1, 2] {
            let pick = |v| out.runs.iter().find(|r| r.variant == v && r.seed == seed && r.axis_value == Some(0.0)).unwrap();
            assert_eq!(pick(Variant::Pl).test, pick(Variant::NCat).test);
        }
    }

    #[test]
    fn metrics_file_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick_spec(dir.path());
        let a = metrics_csv(&spec, "train", &run_grid(&spec, None).unwrap().rows).unwrap();
        let b = metrics_csv(&spec, "train", &run_grid(&spec, None).unwrap().rows).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("# catgnn "));
        let data: Vec<&str> = a.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert!(data[0].starts_with("variant,axis,axis_value"));
    }

    #[test]
    fn bench_only_accepts_the_pair() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = quick_spec(dir.path());
        spec.variants = vec![Variant::Pl, Variant::Fi];
        assert!(matches!(run_bench(&spec), Err(Error::InvalidInput(_))));
        spec.variants = vec![Variant::Pl, Variant::NCat];
        let a = run_bench(&spec).unwrap();
        let b = run_bench(&spec).unwrap();
        assert_eq!(a.intervention.work, b.intervention.work);
        assert_eq!(a.intervention.work.steps, a.baseline.work.steps);
        assert!(a.intervention.work.mixed_edges > 0);
    }
}
