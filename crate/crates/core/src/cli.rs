//! Command-line front end. Every command reads an optional JSON experiment
//! spec and then applies flag overrides on top of it.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::causal::{EnvRounding, Variant};
use crate::error::{Error, Result};
use crate::experiment::{
    run_bench, run_grid, write_bench, write_outcome, DataSource, DatasetSpec, ExperimentSpec, SweepAxis, VERSION,
};
use crate::graph::{generate_synthetic, write_generic_graph, SplitRatios, SynthConfig};
use crate::model::load_checkpoint;
use crate::trainer::evaluate_nodes;

#[derive(Debug, Parser)]
#[command(name = "catgnn", version, about = "Causal graph attention for fraud detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic graph in the generic CSV format plus its split.
    Generate(GenerateArgs),
    /// Train every variant on every seed and write metrics.csv and report.json.
    Train(SpecArgs),
    /// Score a saved checkpoint on the test split of a dataset.
    Evaluate(EvaluateArgs),
    /// Repeat training over a grid of env_ratio or train_ratio values.
    Sweep(SweepArgs),
    /// Time full training of PL against N_CAT.
    Bench(SpecArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON file with a synthetic generator config.
    #[arg(long = "synth-config")]
    pub synth_config: Option<PathBuf>,
    #[arg(long)]
    pub num_nodes: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub fraud_ratio: Option<f64>,
    #[arg(long)]
    pub camouflage_ratio: Option<f64>,
    #[arg(long)]
    pub hidden_label_ratio: Option<f64>,
    #[arg(long)]
    pub num_relations: Option<usize>,
    #[arg(long)]
    pub edges_per_node: Option<usize>,
    #[arg(long)]
    pub edge_noise: Option<f64>,
    #[arg(long)]
    pub class_separation: Option<f64>,
    #[arg(long)]
    pub test_shift: Option<f64>,
}

impl SynthArgs {
    fn any(&self) -> bool {
        self.synth_config.is_some()
            || self.num_nodes.is_some()
            || self.feature_dim.is_some()
            || self.fraud_ratio.is_some()
            || self.camouflage_ratio.is_some()
            || self.hidden_label_ratio.is_some()
            || self.num_relations.is_some()
            || self.edges_per_node.is_some()
            || self.edge_noise.is_some()
            || self.class_separation.is_some()
            || self.test_shift.is_some()
    }

    fn apply(&self, config: &mut SynthConfig) -> Result<()> {
        if let Some(path) = &self.synth_config {
            *config = read_json(path)?;
        }
        set(&mut config.num_nodes, self.num_nodes);
        set(&mut config.feature_dim, self.feature_dim);
        set(&mut config.fraud_ratio, self.fraud_ratio);
        set(&mut config.camouflage_ratio, self.camouflage_ratio);
        set(&mut config.hidden_label_ratio, self.hidden_label_ratio);
        set(&mut config.num_relations, self.num_relations);
        set(&mut config.edges_per_node, self.edges_per_node);
        set(&mut config.edge_noise, self.edge_noise);
        set(&mut config.class_separation, self.class_separation);
        set(&mut config.test_shift, self.test_shift);
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Load a graph written by `generate` (or any generic-format directory with dataset.json).
    #[arg(long, conflicts_with = "transactions")]
    pub graph_dir: Option<PathBuf>,
    /// Transactions CSV to build a temporal graph from.
    #[arg(long)]
    pub transactions: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthArgs,
    /// Comma-separated variant names, e.g. PL,N_CAT.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Use seeds 0..n.
    #[arg(long, conflicts_with = "seeds")]
    pub num_seeds: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_checkpoints: bool,
    #[arg(long)]
    pub bench_repeats: Option<usize>,
    #[arg(long)]
    pub train_ratio: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub num_heads: Option<usize>,
    #[arg(long)]
    pub num_layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub env_ratio: Option<f64>,
    #[arg(long)]
    pub causal_ratio: Option<f64>,
    #[arg(long)]
    pub fixed_env_count: Option<usize>,
    #[arg(long, value_parser = parse_rounding)]
    pub env_rounding: Option<EnvRounding>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub no_early_stopping: bool,
}

fn parse_rounding(s: &str) -> std::result::Result<EnvRounding, String> {
    match s {
        "floor" => Ok(EnvRounding::Floor),
        "ceil" => Ok(EnvRounding::Ceil),
        _ => Err(format!("expected floor or ceil, got `{s}`")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

impl SpecArgs {
    /// The spec file (or defaults) with every given flag applied, validated.
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_json_file(path)?,
            None => ExperimentSpec::default(),
        };
        if let Some(dir) = &self.graph_dir {
            let mut dataset: DatasetSpec = read_json(&dir.join("dataset.json"))?;
            dataset.resolve_paths(dir);
            spec.dataset = dataset;
        }
        if let Some(path) = &self.transactions {
            spec.dataset = DatasetSpec::Transactions {
                path: path.clone(),
                columns: Default::default(),
                graph: Default::default(),
                time_cut: 0.7,
                valid_fraction: 1.0 / 3.0,
                split_seed: 0,
            };
        }
        if self.synth.any() {
            match &mut spec.dataset {
                DatasetSpec::Synthetic { config } => self.synth.apply(config)?,
                _ => return Err(Error::InvalidInput("synthetic flags need a synthetic dataset".into())),
            }
        }
        match (&mut spec.dataset, self.train_ratio) {
            (_, None) => {}
            (DatasetSpec::Synthetic { config }, Some(t)) => config.split = SplitRatios::with_train(t),
            (DatasetSpec::Generic { split, split_file, .. }, Some(t)) => {
                *split = SplitRatios::with_train(t);
                *split_file = None;
            }
            (DatasetSpec::Transactions { time_cut, .. }, Some(t)) => *time_cut = t,
        }
        if let Some(s) = self.split_seed {
            match &mut spec.dataset {
                DatasetSpec::Generic { split_seed, .. } | DatasetSpec::Transactions { split_seed, .. } => *split_seed = s,
                DatasetSpec::Synthetic { .. } => {
                    return Err(Error::InvalidInput("synthetic splits follow the run seed".into()))
                }
            }
        }
        set(&mut spec.variants, self.variants.clone());
        set(&mut spec.seeds, self.seeds.clone());
        if let Some(n) = self.num_seeds {
            spec.seeds = (0..n).collect();
        }
        set(&mut spec.output_dir, self.output_dir.clone());
        if self.no_checkpoints {
            spec.save_checkpoints = false;
        }
        set(&mut spec.bench_repeats, self.bench_repeats);
        let m = &mut spec.model;
        set(&mut m.hidden_dim, self.hidden_dim);
        set(&mut m.num_heads, self.num_heads);
        set(&mut m.num_layers, self.num_layers);
        set(&mut m.dropout, self.dropout);
        set(&mut m.env_ratio, self.env_ratio);
        set(&mut m.causal_ratio, self.causal_ratio);
        set(&mut m.fixed_env_count, self.fixed_env_count);
        set(&mut m.env_rounding, self.env_rounding);
        let t = &mut spec.train;
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.early_stop_patience, self.patience);
        if self.no_early_stopping {
            t.early_stopping = false;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Seed selecting the data instance (the synthetic graph or the split).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub spec: SpecArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub grid: Vec<f64>,
    #[command(flatten)]
    pub spec: SpecArgs,
}

/// What `generate` writes next to the CSV files so `--graph-dir` can find them.
#[derive(Serialize)]
struct GenerateManifest<'a> {
    version: &'a str,
    seed: u64,
    synth_config: &'a SynthConfig,
    num_nodes: usize,
    num_edges: usize,
}

pub fn generate(args: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let mut config = SynthConfig::default();
    args.synth.apply(&mut config)?;
    config.validate()?;
    let (graph, split) = generate_synthetic(&config, args.seed)?;
    let files = write_generic_graph(&graph, &args.out)?;
    let split_path = args.out.join("split.json");
    write_json(&split_path, &split)?;
    let file_name = |p: &Path| PathBuf::from(p.file_name().expect("written files have names"));
    let dataset = DatasetSpec::Generic {
        features: file_name(&files.features),
        labels: file_name(&files.labels),
        edges: files.edges.iter().map(|p| file_name(p)).collect(),
        split: config.split,
        split_seed: args.seed,
        split_file: Some(PathBuf::from("split.json")),
    };
    let dataset_path = args.out.join("dataset.json");
    write_json(&dataset_path, &dataset)?;
    let manifest_path = args.out.join("manifest.json");
    write_json(
        &manifest_path,
        &GenerateManifest {
            version: VERSION,
            seed: args.seed,
            synth_config: &config,
            num_nodes: graph.num_nodes(),
            num_edges: graph.num_edges(),
        },
    )?;
    let mut written = vec![files.features, files.labels];
    written.extend(files.edges);
    written.extend([split_path, dataset_path, manifest_path]);
    Ok(written)
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    version: &'a str,
    checkpoint: &'a Path,
    seed: u64,
    variant: Variant,
    env_ratio: f64,
    causal_ratio: f64,
    weight_mode: &'a str,
    test: crate::metrics::EvalResult,
    spec: &'a ExperimentSpec,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<PathBuf> {
    let spec = args.spec.resolve()?;
    let (params, config) = load_checkpoint(&args.checkpoint)?;
    let (graph, split) = DataSource::load(&spec.dataset)?.instance(args.seed, None)?;
    config.validate()?;
    params.check_config(&config)?;
    let observed = graph.observed_labels(&split.train);
    let test = evaluate_nodes(
        &graph,
        &observed,
        &split.test,
        &params,
        &config,
        spec.train.eval_batch_size,
        spec.train.threshold,
    )?
    .ok_or_else(|| Error::UndefinedMetric("test split does not contain both classes".into()))?;
    fs::create_dir_all(&spec.output_dir).map_err(|e| Error::io(&spec.output_dir, e))?;
    let path = spec.output_dir.join("evaluation.json");
    write_json(
        &path,
        &EvaluationReport {
            version: VERSION,
            checkpoint: &args.checkpoint,
            seed: args.seed,
            variant: config.variant,
            env_ratio: config.env_ratio,
            causal_ratio: config.causal_ratio,
            weight_mode: config.variant.weight_mode().map_or("none", |m| m.as_str()),
            test,
            spec: &spec,
        },
    )?;
    println!("auc={} f1_macro={} ap={}", test.auc, test.f1_macro, test.ap);
    Ok(path)
}

fn print_rows(outcome: &crate::experiment::ExperimentOutcome) {
    for r in &outcome.rows {
        let point = r.axis_value.map_or(String::new(), |v| format!(" {}={v}", r.axis.map_or("", SweepAxis::as_str)));
        println!(
            "{}{point}: auc {:.4} ± {:.4}  f1 {:.4} ± {:.4}  ap {:.4} ± {:.4}",
            r.variant, r.auc_mean, r.auc_std, r.f1_mean, r.f1_std, r.ap_mean, r.ap_std
        );
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => {
            for path in generate(&args)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train(args) => {
            let spec = args.resolve()?;
            let outcome = run_grid(&spec, None)?;
            print_rows(&outcome);
            let (csv, json) = write_outcome(&spec, "train", &outcome)?;
            println!("wrote {} and {}", csv.display(), json.display());
        }
        Command::Evaluate(args) => {
            let path = evaluate(&args)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep(args) => {
            let spec = args.spec.resolve()?;
            let outcome = run_grid(&spec, Some((args.axis, &args.grid)))?;
            print_rows(&outcome);
            let (csv, json) = write_outcome(&spec, &format!("sweep {}", args.axis.as_str()), &outcome)?;
            println!("wrote {} and {}", csv.display(), json.display());
        }
        Command::Bench(args) => {
            let mut spec = args.resolve()?;
            if args.variants.is_none() && args.config.is_none() {
                spec.variants = vec![Variant::Pl, Variant::NCat];
            }
            let report = run_bench(&spec)?;
            println!(
                "PL {:.3}s  N_CAT {:.3}s  overhead {:+.2}%  steps {}",
                report.intervention.seconds, report.baseline.seconds, report.overhead_pct, report.intervention.work.steps
            );
            println!("wrote {}", write_bench(&spec, &report)?.display());
        }
    }
    Ok(())
}
