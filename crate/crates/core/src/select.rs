//! Closed-form choice of the Gaussian kernel variance.
//!
//! The selected variance σ²_ed is the one at which the similarity of the
//! most distant pair of sampled nodes just reaches the noise ceiling:
//!
//! ```text
//! 2η exp(−‖d‖²_max / 2σ²_ed) = noise_up   ⇒   σ²_ed = −‖d‖²_max / (2 ln(noise_up / 2η))
//! ```
//!
//! The same construction with the smallest nonzero distance gives the lower
//! diagnostic boundary σ²_ce, and requiring the most distant pair to stay
//! within `closeness` of 2η gives the upper boundary
//! σ²_da = −‖d‖²_max / (2 ln(1 − closeness)).
//!
//! `noise_up` defaults to 2η/√(2D). With refinement enabled, one training
//! order is replayed at the default σ²_ed, the contribution weights toward a
//! set of probe nodes are computed, and the largest |min F| over the probes
//! replaces the default ceiling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Result, SkgError};
use crate::graph_data::{pairwise_l1_max, pairwise_stats, AdjacencyVector};
use crate::model::visiting_order;
use crate::rff::sample_bank;
use crate::weights::{noise_up_refined_max, noise_up_theoretical, WeightAnalyzer, DEFAULT_STEP_CAP};

pub const DEFAULT_CLOSENESS: f64 = 0.1;

fn log_ratio(noise_up: f64, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(SkgError::Argument(format!("learning rate must be positive, got {eta}")));
    }
    if !(noise_up > 0.0 && noise_up < 2.0 * eta) {
        return Err(SkgError::Domain(format!(
            "noise ceiling {noise_up} must lie in (0, 2η = {})",
            2.0 * eta
        )));
    }
    Ok((noise_up / (2.0 * eta)).ln())
}

/// σ²_ed = −‖d‖²_max / (2 ln(noise_up / 2η)).
pub fn sigma_ed(d_sq_max: f64, noise_up: f64, eta: f64) -> Result<f64> {
    if !(d_sq_max > 0.0) {
        return Err(SkgError::Argument(format!(
            "largest squared distance must be positive, got {d_sq_max}"
        )));
    }
    Ok(-d_sq_max / (2.0 * log_ratio(noise_up, eta)?))
}

/// σ²_ce = −‖d‖²_min,nonzero / (2 ln(noise_up / 2η)).
pub fn sigma_ce(d_sq_min_nonzero: Option<f64>, noise_up: f64, eta: f64) -> Result<f64> {
    let d = d_sq_min_nonzero.ok_or_else(|| SkgError::State("no nonzero pairwise distance".into()))?;
    if !(d > 0.0) {
        return Err(SkgError::Argument(format!(
            "smallest nonzero distance must be positive, got {d}"
        )));
    }
    Ok(-d / (2.0 * log_ratio(noise_up, eta)?))
}

fn check_closeness(closeness: f64) -> Result<()> {
    if closeness > 0.0 && closeness < 0.5 {
        Ok(())
    } else {
        Err(SkgError::Argument(format!(
            "closeness must lie in (0, 0.5), got {closeness}"
        )))
    }
}

/// σ²_da = −‖d‖²_max / (2 ln(1 − closeness)).
pub fn sigma_da(d_sq_max: f64, closeness: f64) -> Result<f64> {
    check_closeness(closeness)?;
    Ok(-d_sq_max / (2.0 * (1.0 - closeness).ln()))
}

/// σ²_da with ln(1 − c) replaced by −c, i.e. ‖d‖²_max / 2c.
pub fn sigma_da_first_order(d_sq_max: f64, closeness: f64) -> Result<f64> {
    check_closeness(closeness)?;
    Ok(d_sq_max / (2.0 * closeness))
}

/// Laplacian-kernel diversity b solving 2η exp(−‖d‖₁_max / b) = noise_up.
pub fn laplacian_diversity(d_l1_max: f64, noise_up: f64, eta: f64) -> Result<f64> {
    if !(d_l1_max > 0.0) {
        return Err(SkgError::Argument(format!(
            "largest l1 distance must be positive, got {d_l1_max}"
        )));
    }
    Ok(-d_l1_max / log_ratio(noise_up, eta)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    Theoretical,
    Refined,
}

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub eta: f64,
    pub num_features: usize,
    pub closeness: f64,
    pub refine: bool,
    pub first_order_da: bool,
    /// Seed for the bank and visiting order of the refinement pass.
    pub seed: u64,
    /// Epochs of the refinement pass.
    pub epochs: usize,
    /// Probe nodes for refinement; the sampled nodes themselves when empty.
    pub probes: Vec<AdjacencyVector>,
}

impl SelectOptions {
    pub fn new(eta: f64, num_features: usize) -> Self {
        SelectOptions {
            eta,
            num_features,
            closeness: DEFAULT_CLOSENESS,
            refine: false,
            first_order_da: false,
            seed: 0,
            epochs: 3,
            probes: Vec::new(),
        }
    }
}

/// Refinement details kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub noise_up_theoretical: f64,
    pub sigma_sq_ed_theoretical: f64,
    pub noise_up_measured: f64,
    pub probe_count: usize,
    pub steps: usize,
    /// True when the measured ceiling was unusable (0 or ≥ 2η).
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub sampled_count: usize,
    pub pair_count: usize,
    pub eta: f64,
    pub num_features: usize,
    pub d_sq_max: f64,
    pub d_sq_min_nonzero: f64,
    pub d_l1_max: f64,
    pub noise_up: f64,
    pub noise_up_source: NoiseSource,
    pub sigma_sq_ce: f64,
    pub sigma_sq_ed: f64,
    pub sigma_sq_da: f64,
    pub first_order_da: bool,
    pub closeness: f64,
    pub laplacian_b: f64,
    pub refinement: Option<Refinement>,
}

/// Runs the full selection on the sampled nodes' adjacency vectors.
pub fn select(vectors: &[AdjacencyVector], opts: &SelectOptions) -> Result<SelectionReport> {
    check_closeness(opts.closeness)?;
    let stats = pairwise_stats(vectors)?;
    let d_sq_min_nonzero = stats.d_sq_min_nonzero.ok_or_else(|| {
        SkgError::Degenerate("all sampled adjacency vectors are identical (no nonzero distance)".into())
    })?;
    let d_l1_max = pairwise_l1_max(vectors)?;
    let theoretical = noise_up_theoretical(opts.eta, opts.num_features)?;
    let sigma_ed_theory = sigma_ed(stats.d_sq_max, theoretical, opts.eta)?;

    let (noise_up, source, refinement) = if opts.refine {
        let measured = measure_noise_up(vectors, opts, sigma_ed_theory)?;
        let usable = measured > 0.0 && measured < 2.0 * opts.eta;
        let refinement = Refinement {
            noise_up_theoretical: theoretical,
            sigma_sq_ed_theoretical: sigma_ed_theory,
            noise_up_measured: measured,
            probe_count: if opts.probes.is_empty() {
                vectors.len()
            } else {
                opts.probes.len()
            },
            steps: vectors.len() * opts.epochs,
            fell_back: !usable,
        };
        if usable {
            (measured, NoiseSource::Refined, Some(refinement))
        } else {
            (theoretical, NoiseSource::Theoretical, Some(refinement))
        }
    } else {
        (theoretical, NoiseSource::Theoretical, None)
    };

    let sigma_sq_da = if opts.first_order_da {
        sigma_da_first_order(stats.d_sq_max, opts.closeness)?
    } else {
        sigma_da(stats.d_sq_max, opts.closeness)?
    };
    Ok(SelectionReport {
        sampled_count: vectors.len(),
        pair_count: stats.pair_count,
        eta: opts.eta,
        num_features: opts.num_features,
        d_sq_max: stats.d_sq_max,
        d_sq_min_nonzero,
        d_l1_max,
        noise_up,
        noise_up_source: source,
        sigma_sq_ce: sigma_ce(Some(d_sq_min_nonzero), noise_up, opts.eta)?,
        sigma_sq_ed: sigma_ed(stats.d_sq_max, noise_up, opts.eta)?,
        sigma_sq_da,
        first_order_da: opts.first_order_da,
        closeness: opts.closeness,
        laplacian_b: laplacian_diversity(d_l1_max, noise_up, opts.eta)?,
        refinement,
    })
}

/// Largest |min F| toward the probes after one replayed training order at `sigma_sq`.
pub fn measure_noise_up(vectors: &[AdjacencyVector], opts: &SelectOptions, sigma_sq: f64) -> Result<f64> {
    let m = vectors[0].len();
    let bank = Arc::new(sample_bank(sigma_sq, opts.num_features, m, opts.seed)?);
    let order = visiting_order(vectors.len(), opts.epochs.max(1), opts.seed);
    let analyzer = WeightAnalyzer::new(&bank, opts.eta, vectors, &order, DEFAULT_STEP_CAP)?;
    let probes = if opts.probes.is_empty() { vectors } else { &opts.probes };
    let traces = probes
        .iter()
        .map(|p| analyzer.probe(&bank.feature_map(p)?))
        .collect::<Result<Vec<_>>>()?;
    noise_up_refined_max(&traces)
}

fn quantity(value: impl Into<Value>, source: &str) -> Value {
    json!({ "value": value.into(), "source": source })
}

impl SelectionReport {
    /// Auditable JSON: every number is `{ "value", "source" }`.
    pub fn to_json(&self) -> Value {
        let noise_source = match self.noise_up_source {
            NoiseSource::Theoretical => "theoretical: 2*eta/sqrt(2*D)",
            NoiseSource::Refined => "refined: max over probes of |min_i F[i,T+1]|",
        };
        let da_source = if self.first_order_da {
            "first-order: d_sq_max/(2*closeness)"
        } else {
            "-d_sq_max/(2*ln(1-closeness))"
        };
        let mut doc = json!({
            "inputs": {
                "sampled_count": quantity(self.sampled_count, "input"),
                "eta": quantity(self.eta, "input"),
                "D": quantity(self.num_features, "input"),
                "closeness": quantity(self.closeness, "input"),
            },
            "statistics": {
                "pair_count": quantity(self.pair_count, "pairwise scan: N(N-1)/2"),
                "d_sq_max": quantity(self.d_sq_max, "pairwise scan: max ||a_i-a_j||^2"),
                "d_sq_min_nonzero": quantity(self.d_sq_min_nonzero, "pairwise scan: min nonzero ||a_i-a_j||^2"),
                "d_l1_max": quantity(self.d_l1_max, "pairwise scan: max ||a_i-a_j||_1"),
            },
            "noise_up": quantity(self.noise_up, noise_source),
            "noise_up_source": match self.noise_up_source {
                NoiseSource::Theoretical => "theoretical",
                NoiseSource::Refined => "refined",
            },
            "boundaries": {
                "sigma_sq_ce": quantity(self.sigma_sq_ce, "-d_sq_min_nonzero/(2*ln(noise_up/(2*eta)))"),
                "sigma_sq_ed": quantity(self.sigma_sq_ed, "-d_sq_max/(2*ln(noise_up/(2*eta)))"),
                "sigma_sq_da": quantity(self.sigma_sq_da, da_source),
            },
            "laplacian_b": quantity(self.laplacian_b, "-d_l1_max/ln(noise_up/(2*eta))"),
        });
        if let Some(r) = &self.refinement {
            doc["refinement"] = json!({
                "noise_up_theoretical": quantity(r.noise_up_theoretical, "theoretical: 2*eta/sqrt(2*D)"),
                "sigma_sq_ed_theoretical": quantity(r.sigma_sq_ed_theoretical, "-d_sq_max/(2*ln(noise_up_theoretical/(2*eta)))"),
                "noise_up_measured": quantity(r.noise_up_measured, "refined: max over probes of |min_i F[i,T+1]|"),
                "probe_count": quantity(r.probe_count, "input"),
                "steps": quantity(r.steps, "N*epochs"),
                "fell_back": r.fell_back,
            });
        }
        doc
    }
}
