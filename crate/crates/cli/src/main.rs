//! `skg` command-line tool.
//!
//! Exit codes: 0 success, 2 argument error, 3 data error, 4 numeric or
//! degenerate-input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use skg::harness::{
    best_point, bf_csv, export_bf_trace, export_scatter, prepare_with_split, run_prepared, scatter_csv, sweep_csv,
    PreparedSplit,
};
use skg::{
    build_adjacency_vectors, gnmse, load_graph, load_values, pairwise_l1_max, pairwise_stats, planted_communities,
    sample_bank, select, split_sample, CommunityParams, Dataset, ErrorKind, ExperimentConfig, ModelFile, NodeId,
    Normalization, SelectOptions, SelectionReport, SkgError, SkgModel, SplitManifest, SweepGrid,
};

#[derive(Parser)]
#[command(
    name = "skg",
    version,
    about = "Single-kernel Gradraker learner with closed-form Gaussian variance selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute σ²_ce, σ²_ed and σ²_da for the sampled nodes and print the report as JSON.
    Select(SelectArgs),
    /// Print pairwise distance statistics of the sampled nodes as JSON.
    Stats(DataOpts),
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Predict node values with a saved model; writes `node_id,prediction` CSV.
    Predict(PredictArgs),
    /// GNMSE over a σ² grid, averaged over repeated seeded runs; writes CSV.
    Sweep(SweepArgs),
    /// Contribution-weight trace for one tested node and the distance scatter.
    Analyze(AnalyzeArgs),
    /// Write a planted-community dataset (edges.csv, values.csv).
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct DataOpts {
    /// Edge list CSV: `src,dst[,weight]`.
    #[arg(long)]
    graph: PathBuf,
    /// Node values CSV: `node_id,value`.
    #[arg(long)]
    values: PathBuf,
    /// Read the third edge-list column as a weight.
    #[arg(long)]
    weighted: bool,
    /// Treat edges as directed (adjacency vectors use out-edges).
    #[arg(long)]
    directed: bool,
    /// Exclude nodes without edges from sampling and testing.
    #[arg(long)]
    drop_isolated: bool,
    /// JSON config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Learning rate η.
    #[arg(long)]
    eta: Option<f64>,
    /// Number of random features D.
    #[arg(long = "features")]
    num_features: Option<usize>,
    /// Training epochs E.
    #[arg(long)]
    epochs: Option<usize>,
    /// Fraction of nodes sampled for training.
    #[arg(long)]
    sample_fraction: Option<f64>,
    /// Seed for split, feature bank and visiting order.
    #[arg(long)]
    seed: Option<u64>,
    /// Closeness for σ²_da, in (0, 0.5).
    #[arg(long)]
    closeness: Option<f64>,
    /// Measure the noise ceiling from a replayed training run.
    #[arg(long)]
    refine: bool,
    /// Use d_sq_max/(2·closeness) for σ²_da.
    #[arg(long)]
    first_order_da: bool,
    /// Value normalization: `max-abs` or `identity`.
    #[arg(long)]
    normalization: Option<String>,
    /// Read the sampled/tested split from this JSON manifest.
    #[arg(long)]
    split_in: Option<PathBuf>,
    /// Write the sampled/tested split to this JSON manifest.
    #[arg(long)]
    split_out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "SKG_JOBS")]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataOpts,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataOpts,
    /// Kernel variance, or `auto` for σ²_ed.
    #[arg(long)]
    sigma_sq: Option<SigmaSq>,
    /// Model JSON output.
    #[arg(long)]
    model_out: PathBuf,
    /// Per-step `t,node_index,prediction,error` CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    weighted: bool,
    #[arg(long)]
    directed: bool,
    /// Comma-separated node ids (default: every node with a value, or every graph node).
    #[arg(long, value_delimiter = ',')]
    nodes: Vec<String>,
    /// Node values; when given, GNMSE over the predicted nodes is reported on stderr.
    #[arg(long)]
    values: Option<PathBuf>,
    /// CSV output instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataOpts,
    /// Comma-separated σ² values (default: log grid over [σ²_ce/10, 10·σ²_da]).
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Points of the default grid.
    #[arg(long, default_value_t = 25)]
    grid_points: usize,
    /// Repeated runs per grid point.
    #[arg(long)]
    repeats: Option<usize>,
    /// Reuse one split (from `--seed`) for every repeat.
    #[arg(long)]
    fixed_split: bool,
    /// CSV output instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataOpts,
    /// Kernel variance, or `auto` for σ²_ed.
    #[arg(long)]
    sigma_sq: Option<SigmaSq>,
    /// Tested node to trace (default: first tested node).
    #[arg(long)]
    node: Option<String>,
    /// `i,B,F,alpha,alpha_flag` CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// `d_sq,abs_dy` CSV.
    #[arg(long)]
    scatter_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    communities: usize,
    #[arg(long, default_value_t = 0.6)]
    p_in: f64,
    #[arg(long, default_value_t = 0.02)]
    p_out: f64,
    #[arg(long, default_value_t = 0.1)]
    value_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
enum SigmaSq {
    Value(f64),
    #[serde(deserialize_with = "auto_literal")]
    Auto,
}

fn auto_literal<'de, D: serde::Deserializer<'de>>(d: D) -> Result<(), D::Error> {
    let s = String::deserialize(d)?;
    if s == "auto" {
        Ok(())
    } else {
        Err(serde::de::Error::custom(format!(
            "expected a number or \"auto\", got {s:?}"
        )))
    }
}

impl FromStr for SigmaSq {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(SigmaSq::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaSq::Value(v)),
            _ => Err(format!("expected a positive number or \"auto\", got {s:?}")),
        }
    }
}

/// Config-file entries; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    eta: Option<f64>,
    #[serde(rename = "D")]
    num_features: Option<usize>,
    epochs: Option<usize>,
    sample_fraction: Option<f64>,
    seed: Option<u64>,
    closeness: Option<f64>,
    refine_noise: Option<bool>,
    first_order_da: Option<bool>,
    normalization: Option<Normalization>,
    sigma_sq: Option<SigmaSq>,
    repeats: Option<usize>,
    jobs: Option<usize>,
}

/// Flags merged over the config file over defaults.
struct RunConfig {
    experiment: ExperimentConfig,
    seed: u64,
    closeness: f64,
    refine: bool,
    first_order_da: bool,
    sigma_sq: Option<SigmaSq>,
    repeats: Option<usize>,
}

fn arg_err(msg: impl Into<String>) -> SkgError {
    SkgError::Argument(msg.into())
}

impl DataOpts {
    fn resolve(&self) -> skg::Result<RunConfig> {
        let file: FileConfig = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => FileConfig::default(),
        };
        let normalization = match &self.normalization {
            Some(name) => serde_json::from_value(json!(name))
                .map_err(|_| arg_err(format!("unknown normalization {name:?} (max-abs | identity)")))?,
            None => file.normalization.unwrap_or_default(),
        };
        let jobs = self.jobs.or(file.jobs);
        if let Some(j) = jobs {
            // ignore a second initialization; the first pool stays in place
            let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
        }
        let experiment = ExperimentConfig {
            eta: self.eta.or(file.eta).unwrap_or(0.1),
            num_features: self.num_features.or(file.num_features).unwrap_or(200),
            epochs: self.epochs.or(file.epochs).unwrap_or(3),
            sample_fraction: self.sample_fraction.or(file.sample_fraction).unwrap_or(0.4),
            normalization,
            fixed_split: None,
        };
        experiment.validate()?;
        Ok(RunConfig {
            experiment,
            seed: self.seed.or(file.seed).unwrap_or(0),
            closeness: self
                .closeness
                .or(file.closeness)
                .unwrap_or(skg::select::DEFAULT_CLOSENESS),
            refine: self.refine || file.refine_noise.unwrap_or(false),
            first_order_da: self.first_order_da || file.first_order_da.unwrap_or(false),
            sigma_sq: file.sigma_sq,
            repeats: file.repeats,
        })
    }

    fn dataset(&self) -> skg::Result<Dataset> {
        let graph = load_graph(&self.graph, self.weighted, self.directed)?;
        let values = load_values(&self.values)?;
        let data = Dataset::new(graph, values);
        if self.drop_isolated {
            data.drop_isolated()
        } else {
            Ok(data)
        }
    }

    fn split(&self, data: &Dataset, cfg: &RunConfig) -> skg::Result<SplitManifest> {
        let split = match &self.split_in {
            Some(p) => SplitManifest::load(p)?,
            None => split_sample(&data.nodes, cfg.experiment.sample_fraction, cfg.seed)?,
        };
        if let Some(p) = &self.split_out {
            split.save(p)?;
        }
        Ok(split)
    }

    fn prepared(&self) -> skg::Result<(Dataset, RunConfig, PreparedSplit)> {
        let cfg = self.resolve()?;
        let data = self.dataset()?;
        let split = self.split(&data, &cfg)?;
        let prepared = prepare_with_split(&data, &cfg.experiment, split)?;
        Ok((data, cfg, prepared))
    }
}

fn select_options(cfg: &RunConfig, prepared: &PreparedSplit) -> SelectOptions {
    let mut opts = SelectOptions::new(cfg.experiment.eta, cfg.experiment.num_features);
    opts.closeness = cfg.closeness;
    opts.refine = cfg.refine;
    opts.first_order_da = cfg.first_order_da;
    opts.seed = cfg.seed;
    opts.epochs = cfg.experiment.epochs;
    opts.probes = prepared.tested_vectors.clone();
    opts
}

fn run_select(cfg: &RunConfig, prepared: &PreparedSplit) -> skg::Result<SelectionReport> {
    select(prepared.train.vectors(), &select_options(cfg, prepared))
}

/// Resolves `auto` (or an absent value) to σ²_ed.
fn resolve_sigma(flag: Option<SigmaSq>, cfg: &RunConfig, prepared: &PreparedSplit) -> skg::Result<(f64, &'static str)> {
    match flag.or(cfg.sigma_sq).unwrap_or(SigmaSq::Auto) {
        SigmaSq::Value(v) => Ok((v, "given")),
        SigmaSq::Auto => Ok((run_select(cfg, prepared)?.sigma_sq_ed, "selected sigma_sq_ed")),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> skg::Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_select(args: SelectArgs) -> skg::Result<()> {
    let (_, cfg, prepared) = args.data.prepared()?;
    let report = run_select(&cfg, &prepared)?;
    let text = serde_json::to_string_pretty(&report.to_json())? + "\n";
    write_or_print(args.out.as_deref(), &text)
}

fn cmd_stats(data: DataOpts) -> skg::Result<()> {
    let (_, _, prepared) = data.prepared()?;
    let stats = pairwise_stats(prepared.train.vectors())?;
    let doc = json!({
        "sampled_count": prepared.train.len(),
        "pair_count": stats.pair_count,
        "d_sq_max": stats.d_sq_max,
        "d_sq_min_nonzero": stats.d_sq_min_nonzero,
        "d_l1_max": pairwise_l1_max(prepared.train.vectors())?,
        "histogram": stats.histogram.iter().map(|(d, n)| json!({"d_sq": d, "count": n})).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn cmd_train(args: TrainArgs) -> skg::Result<()> {
    let (_, cfg, prepared) = args.data.prepared()?;
    let (sigma_sq, sigma_source) = resolve_sigma(args.sigma_sq, &cfg, &prepared)?;
    let bank = Arc::new(sample_bank(
        sigma_sq,
        cfg.experiment.num_features,
        prepared.train.dim(),
        cfg.seed,
    )?);
    let mut model = SkgModel::new(bank, cfg.experiment.eta)?;
    let trace = model.train(&prepared.train, cfg.experiment.epochs, cfg.seed)?;
    let tested_gnmse = if prepared.tested_vectors.is_empty() {
        None
    } else {
        let preds = prepared
            .tested_vectors
            .iter()
            .map(|a| model.predict(a))
            .collect::<skg::Result<Vec<_>>>()?;
        Some(gnmse(&prepared.tested_values, &preds)?)
    };
    let file = ModelFile {
        value_scale: Some(prepared.scale),
        ..ModelFile::from_model(&model, Some(prepared.split.sampled.clone()))
    };
    file.save(&args.model_out)?;
    if let Some(p) = &args.trace_out {
        fs::write(p, trace.to_csv())?;
    }
    let summary = json!({
        "sigma_sq": { "value": sigma_sq, "source": sigma_source },
        "steps": trace.len(),
        "sampled": prepared.train.len(),
        "tested": prepared.tested_vectors.len(),
        "gnmse_tested": tested_gnmse,
        "model": args.model_out,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> skg::Result<()> {
    let file = ModelFile::load(&args.model)?;
    let referencing = file
        .referencing
        .clone()
        .ok_or_else(|| SkgError::Validation("model file lists no referencing nodes".into()))?;
    let scale = file.value_scale.unwrap_or(1.0);
    let model = file.into_model()?;
    let graph = load_graph(&args.graph, args.weighted, args.directed)?;
    let values = args.values.as_ref().map(load_values).transpose()?;
    let nodes: Vec<NodeId> = if !args.nodes.is_empty() {
        args.nodes.iter().map(|s| NodeId::new(s.as_str())).collect()
    } else if let Some(v) = &values {
        v.ids()
    } else {
        graph.nodes().to_vec()
    };
    let vectors = build_adjacency_vectors(&graph, &nodes, &referencing)?;
    let predictions = vectors
        .iter()
        .map(|a| model.predict(a).map(|p| p * scale))
        .collect::<skg::Result<Vec<_>>>()?;
    let mut out = String::from("node_id,prediction\n");
    for (id, p) in nodes.iter().zip(&predictions) {
        out.push_str(&format!("{id},{p}\n"));
    }
    write_or_print(args.out.as_deref(), &out)?;
    if let Some(v) = &values {
        let truth = nodes.iter().map(|id| v.value(id)).collect::<skg::Result<Vec<_>>>()?;
        eprintln!("gnmse {}", gnmse(&truth, &predictions)?);
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> skg::Result<()> {
    let mut cfg = args.data.resolve()?;
    if args.fixed_split {
        cfg.experiment.fixed_split = Some(cfg.seed);
    }
    let data = args.data.dataset()?;
    let repeats = args.repeats.or(cfg.repeats).unwrap_or(50);
    if repeats == 0 {
        return Err(arg_err("repeats must be ≥ 1"));
    }
    let split = args.data.split(&data, &cfg)?;
    let prepared = prepare_with_split(&data, &cfg.experiment, split)?;
    let report = run_select(&cfg, &prepared)?;
    let grid = if args.grid.is_empty() {
        SweepGrid::around_selection(&report, args.grid_points)?
    } else {
        SweepGrid::new(args.grid.clone())?.with_marker(report.sigma_sq_ed)?
    };
    let results = skg::sweep(&data, &cfg.experiment, &grid, repeats, cfg.seed, 0)?;
    write_or_print(args.out.as_deref(), &sweep_csv(&results))?;
    if let Some(best) = best_point(&results) {
        eprintln!(
            "sigma_sq_ed {} ; lowest mean GNMSE {} at sigma_sq {}",
            report.sigma_sq_ed, best.gnmse_mean, best.sigma_sq
        );
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> skg::Result<()> {
    let (_, cfg, prepared) = args.data.prepared()?;
    let (sigma_sq, _) = resolve_sigma(args.sigma_sq, &cfg, &prepared)?;
    let node = match &args.node {
        Some(id) => NodeId::new(id.as_str()),
        None => prepared
            .split
            .tested
            .first()
            .cloned()
            .ok_or_else(|| arg_err("the split has no tested nodes to trace"))?,
    };
    prepared.tested_index(&node)?;
    let scatter = export_scatter(&prepared.train)?;
    let run = run_prepared(prepared, &cfg.experiment, sigma_sq, cfg.seed, true)?;
    let rows = export_bf_trace(run.artifacts.as_ref(), &node)?;
    write_or_print(args.trace_out.as_deref(), &bf_csv(&rows))?;
    if let Some(p) = &args.scatter_out {
        fs::write(p, scatter_csv(&scatter))?;
    }
    eprintln!("node {node} ; sigma_sq {sigma_sq} ; run GNMSE {}", run.gnmse);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> skg::Result<()> {
    let params = CommunityParams {
        nodes: args.nodes,
        communities: args.communities,
        p_in: args.p_in,
        p_out: args.p_out,
        value_noise: args.value_noise,
        ..CommunityParams::default()
    };
    let data = planted_communities(&params, args.seed)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut edges = String::from("# src,dst\n");
    for e in data.graph.edges() {
        edges.push_str(&format!("{},{}\n", e.source, e.target));
    }
    fs::write(args.out_dir.join("edges.csv"), edges)?;
    let mut values = String::from("node_id,value\n");
    for (id, v) in data.values.entries() {
        values.push_str(&format!("{id},{v}\n"));
    }
    fs::write(args.out_dir.join("values.csv"), values)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Argument => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_sq_accepts_number_or_auto() {
        assert_eq!("auto".parse::<SigmaSq>().unwrap(), SigmaSq::Auto);
        assert_eq!("2.5".parse::<SigmaSq>().unwrap(), SigmaSq::Value(2.5));
        assert!("-1".parse::<SigmaSq>().is_err());
        assert!("x".parse::<SigmaSq>().is_err());
        let cfg: FileConfig = serde_json::from_str(r#"{"sigma_sq": "auto"}"#).unwrap();
        assert_eq!(cfg.sigma_sq, Some(SigmaSq::Auto));
        let cfg: FileConfig = serde_json::from_str(r#"{"sigma_sq": 3.0}"#).unwrap();
        assert_eq!(cfg.sigma_sq, Some(SigmaSq::Value(3.0)));
        assert!(serde_json::from_str::<FileConfig>(r#"{"sigma_sq": "big"}"#).is_err());
    }
}
