//! Similarity measures and contribution weights of a training run.
//!
//! For the nodes seen at steps i < j (steps are 0-based here; the probe
//! appended after T training steps sits at index T):
//!
//! ```text
//! B[i,j] = 2η z(a_i)ᵀ z(a_j)
//! F[j−1,j] = B[j−1,j]
//! F[i,j]   = B[i,j] − Σ_{k=i+1}^{j−1} B[i,k] F[k,j]
//! ```
//!
//! With these weights the learner's prediction at step j is exactly
//! Σ_{i<j} y_i F[i,j], which is what [`weighted_prediction_oracle`] evaluates.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{check_dims, Result, SkgError};
use crate::graph_data::AdjacencyVector;
use crate::rff::{FeatureVector, RandomFeatureBank};

/// Largest number of steps for which the dense B matrix is materialized.
pub const DEFAULT_STEP_CAP: usize = 5000;

/// 2η z(a_i)ᵀz(a_j).
pub fn similarity(bank: &RandomFeatureBank, a_i: &AdjacencyVector, a_j: &AdjacencyVector, eta: f64) -> Result<f64> {
    Ok(2.0 * eta * bank.feature_map(a_i)?.dot(&bank.feature_map(a_j)?))
}

/// Large-D limit of the similarity: 2η exp(−‖d‖²/2σ²).
pub fn similarity_approx(d_sq: f64, sigma_sq: f64, eta: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(SkgError::Argument(format!(
            "kernel variance must be positive, got {sigma_sq}"
        )));
    }
    if !(d_sq >= 0.0) {
        return Err(SkgError::Argument(format!("squared distance must be ≥ 0, got {d_sq}")));
    }
    Ok(2.0 * eta * (-d_sq / (2.0 * sigma_sq)).exp())
}

/// Variance of B[i,j] over the frequency draw for a fixed ‖d‖²:
/// ((2η)²/2D)(exp(−‖d‖²/σ²) − 1)².
pub fn similarity_conditional_variance(d_sq: f64, sigma_sq: f64, eta: f64, num_features: usize) -> Result<f64> {
    if num_features == 0 {
        return Err(SkgError::Argument("feature count must be ≥ 1".into()));
    }
    if !(sigma_sq > 0.0) {
        return Err(SkgError::Argument(format!(
            "kernel variance must be positive, got {sigma_sq}"
        )));
    }
    let g = (-d_sq / sigma_sq).exp() - 1.0;
    Ok((2.0 * eta).powi(2) / (2.0 * num_features as f64) * g * g)
}

/// Expected sum of the T contribution weights toward a probe when the mean
/// similarity is `b`: 1 − (1 − b)^T.
pub fn expected_weight_sum(b: f64, steps: usize) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return Err(SkgError::Argument(format!(
            "mean similarity must lie in (0, 1), got {b}"
        )));
    }
    if steps == 0 {
        return Err(SkgError::Argument("step count must be ≥ 1".into()));
    }
    Ok(1.0 - (1.0 - b).powi(steps as i32))
}

/// Theoretical noise-range ceiling 2η/√(2D).
pub fn noise_up_theoretical(eta: f64, num_features: usize) -> Result<f64> {
    if !(eta > 0.0) || num_features == 0 {
        return Err(SkgError::Argument(format!(
            "learning rate and feature count must be positive (η={eta}, D={num_features})"
        )));
    }
    Ok(2.0 * eta / (2.0 * num_features as f64).sqrt())
}

/// Inverts F = B(1 − α)^{gap−1} for α.
pub fn conformity_alpha(b: f64, f: f64, gap: usize) -> Result<f64> {
    if gap < 2 {
        return Err(SkgError::Argument(format!(
            "conformity factor needs a gap ≥ 2, got {gap}"
        )));
    }
    if !(b > 0.0) {
        return Err(SkgError::Domain(format!("similarity {b} is not positive")));
    }
    let ratio = f / b;
    if !(ratio > 0.0) {
        return Err(SkgError::Domain(format!(
            "weight/similarity ratio {ratio} is not positive"
        )));
    }
    Ok(1.0 - ratio.powf(1.0 / (gap - 1) as f64))
}

/// Dense upper-triangular B over a sequence of steps.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    len: usize,
    eta: f64,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// B over `order`, where step t saw the node whose features are
    /// `node_features[order[t]]`.
    pub fn from_sequence(node_features: &[FeatureVector], order: &[usize], eta: f64, cap: usize) -> Result<Self> {
        let len = order.len();
        if len > cap {
            return Err(SkgError::Argument(format!(
                "{len} steps exceed the similarity-matrix cap of {cap}"
            )));
        }
        if let Some(&bad) = order.iter().find(|&&i| i >= node_features.len()) {
            return Err(SkgError::Argument(format!("step refers to unknown node index {bad}")));
        }
        let pair = node_similarities(node_features, eta);
        let n = node_features.len();
        let mut values = Vec::with_capacity(len * len.saturating_sub(1) / 2);
        for i in 0..len {
            let row = &pair[order[i] * n..(order[i] + 1) * n];
            values.extend(order[i + 1..].iter().map(|&k| row[k]));
        }
        Ok(SimilarityMatrix { len, eta, values })
    }

    /// B over features listed directly in step order.
    pub fn from_features(features: &[FeatureVector], eta: f64) -> Result<Self> {
        let order: Vec<usize> = (0..features.len()).collect();
        Self::from_sequence(features, &order, eta, DEFAULT_STEP_CAP)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn offset(&self, i: usize) -> usize {
        i * self.len - i * (i + 1) / 2
    }

    /// B[i,j] for i < j.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i < j && j < self.len {
            Some(self.values[self.offset(i) + j - i - 1])
        } else {
            None
        }
    }

    fn row_after(&self, i: usize) -> &[f64] {
        let start = self.offset(i);
        &self.values[start..start + self.len - i - 1]
    }

    /// All stored B values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Contribution weights toward step `target` of this sequence.
    pub fn contribution_weights(&self, target: usize) -> Result<WeightTrace> {
        if target == 0 || target >= self.len {
            return Err(SkgError::State(format!(
                "no similarities toward step {target} (sequence has {} steps)",
                self.len
            )));
        }
        let column: Vec<f64> = (0..target)
            .map(|i| self.values[self.offset(i) + target - i - 1])
            .collect();
        Ok(self.weights_for_column(target, column))
    }

    /// Contribution weights toward a step appended after the first
    /// `column.len()` steps, given its similarities B[i,·] to those steps.
    pub fn contribution_weights_for_column(&self, column: Vec<f64>) -> Result<WeightTrace> {
        let target = column.len();
        if target == 0 || target > self.len {
            return Err(SkgError::State(format!(
                "column of length {target} does not fit a sequence of {} steps",
                self.len
            )));
        }
        Ok(self.weights_for_column(target, column))
    }

    fn weights_for_column(&self, target: usize, column: Vec<f64>) -> WeightTrace {
        let mut weights = vec![0.0; target];
        weights[target - 1] = column[target - 1];
        for i in (0..target.saturating_sub(1)).rev() {
            // B[i,k] for k = i+1 .. target−1 is the head of row i
            let row = &self.row_after(i)[..target - i - 1];
            let acc: f64 = row.iter().zip(&weights[i + 1..target]).map(|(b, f)| b * f).sum();
            weights[i] = column[i] - acc;
        }
        WeightTrace::new(target, column, weights)
    }
}

/// N×N matrix of 2η z_pᵀz_q between distinct nodes.
fn node_similarities(features: &[FeatureVector], eta: f64) -> Vec<f64> {
    let n = features.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|p| features.iter().map(|q| 2.0 * eta * features[p].dot(q)).collect())
        .collect();
    rows.into_iter().flatten().collect()
}

/// Status of the conformity factor for one weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Defined(f64),
    /// Gap of one step; the factor is not defined.
    AdjacentStep,
    /// B ≤ 0 or F/B ≤ 0.
    NonPositiveRatio,
}

impl Alpha {
    pub fn value(self) -> Option<f64> {
        match self {
            Alpha::Defined(a) => Some(a),
            _ => None,
        }
    }

    pub fn flag(self) -> &'static str {
        match self {
            Alpha::Defined(_) => "ok",
            Alpha::AdjacentStep => "adjacent",
            Alpha::NonPositiveRatio => "nonpositive_ratio",
        }
    }
}

/// Similarities and contribution weights toward one target step.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTrace {
    pub target: usize,
    /// B[i,target] for i < target.
    pub similarities: Vec<f64>,
    /// F[i,target] for i < target.
    pub weights: Vec<f64>,
    /// Conformity factor α_{target−i} for each i.
    pub alpha: Vec<Alpha>,
}

impl WeightTrace {
    fn new(target: usize, similarities: Vec<f64>, weights: Vec<f64>) -> Self {
        let alpha = similarities
            .iter()
            .zip(&weights)
            .enumerate()
            .map(|(i, (&b, &f))| match target - i {
                1 => Alpha::AdjacentStep,
                gap => conformity_alpha(b, f, gap).map_or(Alpha::NonPositiveRatio, Alpha::Defined),
            })
            .collect();
        WeightTrace {
            target,
            similarities,
            weights,
            alpha,
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// |min F|, the refined noise ceiling seen from this target.
    pub fn noise_up(&self) -> Option<f64> {
        self.weights.iter().copied().reduce(f64::min).map(f64::abs)
    }

    /// CSV `i,d_sq,B,F,alpha,flag`, 1-based i. `d_sq[i]` is ‖a_i − a_target‖².
    pub fn to_csv(&self, d_sq: &[f64]) -> Result<String> {
        check_dims(self.weights.len(), d_sq.len())?;
        let mut out = String::from("i,d_sq,B,F,alpha,flag\n");
        for (i, d) in d_sq.iter().enumerate() {
            let alpha = self.alpha[i].value().map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                d,
                self.similarities[i],
                self.weights[i],
                alpha,
                self.alpha[i].flag()
            );
        }
        Ok(out)
    }
}

/// Free-function form of [`SimilarityMatrix::contribution_weights`].
pub fn contribution_weights(b: &SimilarityMatrix, target: usize) -> Result<WeightTrace> {
    b.contribution_weights(target)
}

/// Σ y_i F[i,target] with `values` in step order.
pub fn weighted_prediction_oracle(values: &[f64], trace: &WeightTrace) -> Result<f64> {
    check_dims(trace.weights.len(), values.len())?;
    Ok(values.iter().zip(&trace.weights).map(|(y, f)| y * f).sum())
}

/// |min_i F[i,T+1]| of a probe trace.
pub fn noise_up_refined(trace: &WeightTrace) -> Result<f64> {
    trace
        .noise_up()
        .ok_or_else(|| SkgError::State("weight trace is empty".into()))
}

/// Largest per-probe |min F| over several probe traces.
pub fn noise_up_refined_max(traces: &[WeightTrace]) -> Result<f64> {
    if traces.is_empty() {
        return Err(SkgError::State("no probe traces".into()));
    }
    traces
        .iter()
        .map(noise_up_refined)
        .try_fold(0.0_f64, |m, v| Ok(m.max(v?)))
}

/// B/F analysis of one training sequence, reusable across probes.
#[derive(Debug, Clone)]
pub struct WeightAnalyzer {
    eta: f64,
    node_features: Vec<FeatureVector>,
    order: Vec<usize>,
    matrix: SimilarityMatrix,
}

impl WeightAnalyzer {
    /// `vectors` are the training nodes; `order` the step-by-step node indices.
    pub fn new(
        bank: &RandomFeatureBank,
        eta: f64,
        vectors: &[AdjacencyVector],
        order: &[usize],
        cap: usize,
    ) -> Result<Self> {
        let node_features = vectors
            .iter()
            .map(|a| bank.feature_map(a))
            .collect::<Result<Vec<_>>>()?;
        let matrix = SimilarityMatrix::from_sequence(&node_features, order, eta, cap)?;
        Ok(WeightAnalyzer {
            eta,
            node_features,
            order: order.to_vec(),
            matrix,
        })
    }

    pub fn matrix(&self) -> &SimilarityMatrix {
        &self.matrix
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Weights toward training step `target`.
    pub fn at_step(&self, target: usize) -> Result<WeightTrace> {
        self.matrix.contribution_weights(target)
    }

    /// Weights toward a probe appended after the last training step.
    pub fn probe(&self, features: &FeatureVector) -> Result<WeightTrace> {
        let per_node: Vec<f64> = self
            .node_features
            .iter()
            .map(|z| 2.0 * self.eta * z.dot(features))
            .collect();
        let column = self.order.iter().map(|&i| per_node[i]).collect();
        self.matrix.contribution_weights_for_column(column)
    }
}
