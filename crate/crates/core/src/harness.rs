//! Seeded experiments, σ² sweeps and the CSV tables behind diagnostic plots.
//!
//! A single run splits the dataset, uses the sampled nodes as referencing
//! nodes, normalizes values by the largest absolute training value, trains
//! for `epochs` passes and scores the tested nodes with
//! GNMSE = ‖y_true − y_pred‖² / ‖y_true‖².

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result, SkgError};
use crate::graph_data::{
    build_adjacency_vectors, pairwise_stats, split_sample, AdjacencyVector, Graph, NodeId, NodeValues, Normalization,
    SplitManifest, TrainingSet,
};
use crate::model::{SkgModel, TrainingTrace};
use crate::rff::{sample_bank, RandomFeatureBank};
use crate::select::{select, SelectOptions, SelectionReport};
use crate::weights::{Alpha, WeightAnalyzer, DEFAULT_STEP_CAP};

/// ‖y_true − y_pred‖² / ‖y_true‖².
pub fn gnmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(SkgError::Argument("GNMSE needs at least one tested value".into()));
    }
    check_dims(y_true.len(), y_pred.len())?;
    let denom: f64 = y_true.iter().map(|y| y * y).sum();
    if denom == 0.0 {
        return Err(SkgError::Degenerate("true values are all zero".into()));
    }
    let num: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(num / denom)
}

/// A graph with nodal values. `nodes` are the candidates for splitting.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub values: NodeValues,
    pub nodes: Vec<NodeId>,
}

impl Dataset {
    /// Every node with a value becomes a candidate; value-only nodes are
    /// added to the graph as isolated nodes.
    pub fn new(mut graph: Graph, values: NodeValues) -> Self {
        let nodes = values.ids();
        for id in &nodes {
            graph.add_node(id.clone());
        }
        Dataset { graph, values, nodes }
    }

    /// Drops candidates without outgoing edges.
    pub fn drop_isolated(mut self) -> Result<Self> {
        self.nodes = self.graph.drop_isolated(&self.nodes)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub eta: f64,
    pub num_features: usize,
    pub epochs: usize,
    pub sample_fraction: f64,
    pub normalization: Normalization,
    /// Reuse this split seed for every run instead of the run seed.
    pub fixed_split: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            eta: 0.1,
            num_features: 200,
            epochs: 3,
            sample_fraction: 0.4,
            normalization: Normalization::MaxAbs,
            fixed_split: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || self.num_features == 0 || self.epochs == 0 {
            return Err(SkgError::Argument("η, D and epochs must be positive".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(SkgError::Argument(format!(
                "sample fraction {} outside (0, 1]",
                self.sample_fraction
            )));
        }
        Ok(())
    }
}

/// Split, adjacency vectors and normalized values of one run.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub split: SplitManifest,
    pub train: TrainingSet,
    pub tested_vectors: Vec<AdjacencyVector>,
    pub tested_values: Vec<f64>,
    pub scale: f64,
}

impl PreparedSplit {
    pub fn tested_index(&self, id: &NodeId) -> Result<usize> {
        self.split
            .tested
            .iter()
            .position(|t| t == id)
            .ok_or_else(|| SkgError::UnknownNode(format!("{id} is not a tested node of this run")))
    }
}

pub fn prepare(dataset: &Dataset, config: &ExperimentConfig, split_seed: u64) -> Result<PreparedSplit> {
    let split = split_sample(&dataset.nodes, config.sample_fraction, split_seed)?;
    prepare_with_split(dataset, config, split)
}

/// Uses the sampled nodes as referencing nodes.
pub fn prepare_with_split(dataset: &Dataset, config: &ExperimentConfig, split: SplitManifest) -> Result<PreparedSplit> {
    if split.sampled.is_empty() {
        return Err(SkgError::Argument("split has no sampled nodes".into()));
    }
    let train_vectors = build_adjacency_vectors(&dataset.graph, &split.sampled, &split.sampled)?;
    let tested_vectors = build_adjacency_vectors(&dataset.graph, &split.tested, &split.sampled)?;
    let raw_train = split
        .sampled
        .iter()
        .map(|id| dataset.values.value(id))
        .collect::<Result<Vec<_>>>()?;
    let raw_tested = split
        .tested
        .iter()
        .map(|id| dataset.values.value(id))
        .collect::<Result<Vec<_>>>()?;
    let normalized = config.normalization.apply(&raw_train, &raw_tested)?;
    let train = TrainingSet::new(split.sampled.clone(), train_vectors, normalized.train)?;
    Ok(PreparedSplit {
        split,
        train,
        tested_vectors,
        tested_values: normalized.other,
        scale: normalized.scale,
    })
}

/// Everything needed to reproduce diagnostics for a finished run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub prepared: PreparedSplit,
    pub model: SkgModel,
    pub trace: TrainingTrace,
}

impl RunArtifacts {
    pub fn bank(&self) -> &Arc<RandomFeatureBank> {
        self.model.bank()
    }

    pub fn analyzer(&self) -> Result<WeightAnalyzer> {
        WeightAnalyzer::new(
            self.bank(),
            self.model.eta(),
            self.prepared.train.vectors(),
            &self.trace.order,
            DEFAULT_STEP_CAP,
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub gnmse: f64,
    pub predictions: Vec<f64>,
    pub artifacts: Option<RunArtifacts>,
}

/// Trains on a prepared split and scores the tested nodes.
pub fn run_prepared(
    prepared: PreparedSplit,
    config: &ExperimentConfig,
    sigma_sq: f64,
    seed: u64,
    retain: bool,
) -> Result<RunOutcome> {
    let bank = Arc::new(sample_bank(sigma_sq, config.num_features, prepared.train.dim(), seed)?);
    let mut model = SkgModel::new(bank, config.eta)?;
    let trace = model.train(&prepared.train, config.epochs, seed)?;
    let predictions = prepared
        .tested_vectors
        .iter()
        .map(|a| model.predict(a))
        .collect::<Result<Vec<_>>>()?;
    let score = gnmse(&prepared.tested_values, &predictions)?;
    Ok(RunOutcome {
        gnmse: score,
        predictions,
        artifacts: retain.then_some(RunArtifacts { prepared, model, trace }),
    })
}

/// split → bank → train → predict tested → GNMSE, fully determined by `seed`.
pub fn run_once(
    dataset: &Dataset,
    config: &ExperimentConfig,
    sigma_sq: f64,
    seed: u64,
    retain: bool,
) -> Result<RunOutcome> {
    config.validate()?;
    let prepared = prepare(dataset, config, config.fixed_split.unwrap_or(seed))?;
    run_prepared(prepared, config, sigma_sq, seed, retain)
}

/// Variance selection on the split a run with `seed` would use.
pub fn select_for_run(
    dataset: &Dataset,
    config: &ExperimentConfig,
    seed: u64,
    refine: bool,
) -> Result<SelectionReport> {
    let prepared = prepare(dataset, config, config.fixed_split.unwrap_or(seed))?;
    let mut opts = SelectOptions::new(config.eta, config.num_features);
    opts.refine = refine;
    opts.seed = seed;
    opts.epochs = config.epochs;
    opts.probes = prepared.tested_vectors.clone();
    select(prepared.train.vectors(), &opts)
}

/// Increasing σ² grid with an optional marked point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    points: Vec<f64>,
    marker: Option<f64>,
}

impl SweepGrid {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(SkgError::Argument("σ² grid is empty".into()));
        }
        if points.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(SkgError::Argument("σ² grid values must be positive and finite".into()));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(SweepGrid { points, marker: None })
    }

    /// `count` points evenly spaced in log σ² over [lo, hi].
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err(SkgError::Argument(format!(
                "log grid needs 0 < lo < hi and ≥ 2 points (lo={lo}, hi={hi}, count={count})"
            )));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
        points[0] = lo;
        points[count - 1] = hi;
        Self::new(points)
    }

    /// Default grid over [σ²_ce/10, 10·σ²_da] with σ²_ed inserted and marked.
    pub fn around_selection(report: &SelectionReport, count: usize) -> Result<Self> {
        Self::log_spaced(report.sigma_sq_ce / 10.0, report.sigma_sq_da * 10.0, count)?.with_marker(report.sigma_sq_ed)
    }

    pub fn with_marker(mut self, sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(SkgError::Argument(format!(
                "marker σ² must be positive, got {sigma_sq}"
            )));
        }
        if !self.points.contains(&sigma_sq) {
            self.points.push(sigma_sq);
            self.points.sort_by(f64::total_cmp);
        }
        self.marker = Some(sigma_sq);
        Ok(self)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn marker(&self) -> Option<f64> {
        self.marker
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnmseResult {
    pub sigma_sq: f64,
    pub gnmse_mean: f64,
    pub gnmse_std: f64,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    pub is_marked: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (σ², seed) cell of the grid. Seeds are processed in sorted
/// order so the aggregate does not depend on how they were listed; `jobs`
/// bounds the worker threads (0 = rayon default).
pub fn sweep_with_seeds(
    dataset: &Dataset,
    config: &ExperimentConfig,
    grid: &SweepGrid,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<GnmseResult>> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(SkgError::Argument("sweep needs at least one repeat".into()));
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let cells: Vec<(usize, u64)> = (0..grid.points.len())
        .flat_map(|g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    let run_cells = || {
        cells
            .par_iter()
            .map(|&(g, s)| run_once(dataset, config, grid.points[g], s, false).map(|o| o.gnmse))
            .collect::<Result<Vec<f64>>>()
    };
    let scores = if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SkgError::Argument(e.to_string()))?
            .install(run_cells)?
    } else {
        run_cells()?
    };
    Ok(grid
        .points
        .iter()
        .zip(scores.chunks(seeds.len()))
        .map(|(&sigma_sq, chunk)| {
            let (gnmse_mean, gnmse_std) = mean_std(chunk);
            GnmseResult {
                sigma_sq,
                gnmse_mean,
                gnmse_std,
                repeats: seeds.len(),
                seeds: seeds.clone(),
                is_marked: grid.marker == Some(sigma_sq),
            }
        })
        .collect())
}

/// Sweep over seeds `base_seed .. base_seed + repeats`.
pub fn sweep(
    dataset: &Dataset,
    config: &ExperimentConfig,
    grid: &SweepGrid,
    repeats: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<GnmseResult>> {
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| base_seed.wrapping_add(r)).collect();
    sweep_with_seeds(dataset, config, grid, &seeds, jobs)
}

/// CSV `sigma_sq,gnmse_mean,gnmse_std,repeats,is_theoretical_ed`.
pub fn sweep_csv(results: &[GnmseResult]) -> String {
    let mut out = String::from("sigma_sq,gnmse_mean,gnmse_std,repeats,is_theoretical_ed\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.sigma_sq, r.gnmse_mean, r.gnmse_std, r.repeats, r.is_marked
        );
    }
    out
}

/// Grid point with the lowest mean GNMSE.
pub fn best_point(results: &[GnmseResult]) -> Option<&GnmseResult> {
    results.iter().min_by(|a, b| a.gnmse_mean.total_cmp(&b.gnmse_mean))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterRow {
    pub d_sq: f64,
    pub abs_dy: f64,
}

/// (‖a_i − a_j‖², |y_i − y_j|) for every unordered pair of the training set.
pub fn export_scatter(set: &TrainingSet) -> Result<Vec<ScatterRow>> {
    if set.len() < 2 {
        return Err(SkgError::Argument("scatter needs at least 2 sampled nodes".into()));
    }
    let (v, y) = (set.vectors(), set.values());
    let mut rows = Vec::with_capacity(set.len() * (set.len() - 1) / 2);
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            rows.push(ScatterRow {
                d_sq: v[i].sq_distance(&v[j])?,
                abs_dy: (y[i] - y[j]).abs(),
            });
        }
    }
    Ok(rows)
}

pub fn scatter_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from("d_sq,abs_dy\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.d_sq, r.abs_dy);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfRow {
    /// 1-based training step.
    pub step: usize,
    pub b: f64,
    pub f: f64,
    pub alpha: Alpha,
}

/// B[i,T+1], F[i,T+1] and α for a tested node treated as step T+1.
pub fn export_bf_trace(artifacts: Option<&RunArtifacts>, tested: &NodeId) -> Result<Vec<BfRow>> {
    let artifacts = artifacts.ok_or_else(|| SkgError::State("run was not retained for tracing".into()))?;
    let k = artifacts.prepared.tested_index(tested)?;
    let z = artifacts.bank().feature_map(&artifacts.prepared.tested_vectors[k])?;
    let trace = artifacts.analyzer()?.probe(&z)?;
    Ok((0..trace.weights.len())
        .map(|i| BfRow {
            step: i + 1,
            b: trace.similarities[i],
            f: trace.weights[i],
            alpha: trace.alpha[i],
        })
        .collect())
}

/// CSV `i,B,F,alpha,alpha_flag`.
pub fn bf_csv(rows: &[BfRow]) -> String {
    let mut out = String::from("i,B,F,alpha,alpha_flag\n");
    for r in rows {
        let alpha = r.alpha.value().map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.step, r.b, r.f, alpha, r.alpha.flag());
    }
    out
}

/// Pairwise statistics of the sampled nodes of a prepared split.
pub fn split_stats(prepared: &PreparedSplit) -> Result<crate::graph_data::PairwiseStats> {
    pairwise_stats(prepared.train.vectors())
}
