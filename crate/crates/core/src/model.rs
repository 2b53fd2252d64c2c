//! The single-kernel learner: a linear head θ over random Fourier features,
//! trained one node at a time with least-squares gradient steps
//!
//! ```text
//! f̂_t = θ_{t−1}ᵀ z(a_t)
//! e_t = y_t − f̂_t
//! θ_t = θ_{t−1} + 2η e_t z(a_t)
//! ```
//!
//! starting from θ₀ = 0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result, SkgError};
use crate::graph_data::{AdjacencyVector, NodeId, TrainingSet};
use crate::rff::{sample_bank, FeatureVector, RandomFeatureBank};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone)]
pub struct SkgModel {
    theta: Vec<f64>,
    bank: Arc<RandomFeatureBank>,
    eta: f64,
}

/// Per-step record of a training run, T = E·N entries long.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub epochs: usize,
    /// Training-set index processed at each step.
    pub order: Vec<usize>,
    /// Prediction made with the pre-update coefficients.
    pub predictions: Vec<f64>,
    pub errors: Vec<f64>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// CSV `t,node_index,prediction,error` with 1-based t.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,node_index,prediction,error\n");
        for (t, ((i, p), e)) in self.order.iter().zip(&self.predictions).zip(&self.errors).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", t + 1, i, p, e);
        }
        out
    }
}

impl SkgModel {
    pub fn new(bank: Arc<RandomFeatureBank>, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(SkgError::Argument(format!("learning rate must be positive, got {eta}")));
        }
        Ok(SkgModel {
            theta: vec![0.0; bank.feature_dim()],
            bank,
            eta,
        })
    }

    pub fn with_theta(bank: Arc<RandomFeatureBank>, eta: f64, theta: Vec<f64>) -> Result<Self> {
        let mut model = Self::new(bank, eta)?;
        check_dims(model.theta.len(), theta.len())?;
        model.theta = theta;
        Ok(model)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn bank(&self) -> &Arc<RandomFeatureBank> {
        &self.bank
    }

    pub fn predict_features(&self, z: &FeatureVector) -> Result<f64> {
        check_dims(self.theta.len(), z.len())?;
        Ok(self.theta.iter().zip(z.as_slice()).map(|(t, x)| t * x).sum())
    }

    pub fn predict(&self, a: &AdjacencyVector) -> Result<f64> {
        self.predict_features(&self.bank.feature_map(a)?)
    }

    /// One gradient step on a precomputed feature vector; returns the
    /// pre-update prediction and residual.
    pub fn step_features(&mut self, z: &FeatureVector, y: f64) -> Result<(f64, f64)> {
        if !y.is_finite() {
            return Err(SkgError::Numeric(format!("non-finite target {y}")));
        }
        let prediction = self.predict_features(z)?;
        if !prediction.is_finite() {
            return Err(SkgError::Numeric("prediction diverged".into()));
        }
        let error = y - prediction;
        let gain = 2.0 * self.eta * error;
        for (t, x) in self.theta.iter_mut().zip(z.as_slice()) {
            *t += gain * x;
        }
        Ok((prediction, error))
    }

    /// One gradient step on `(a, y)`; returns the residual e = y − f̂.
    pub fn train_step(&mut self, a: &AdjacencyVector, y: f64) -> Result<f64> {
        let z = self.bank.feature_map(a)?;
        Ok(self.step_features(&z, y)?.1)
    }

    /// Runs `epochs` passes over `set`, each pass in a fresh uniformly random
    /// order drawn from the order stream of `seed`.
    pub fn train(&mut self, set: &TrainingSet, epochs: usize, seed: u64) -> Result<TrainingTrace> {
        if epochs == 0 {
            return Err(SkgError::Argument("epoch count must be ≥ 1".into()));
        }
        if set.is_empty() {
            return Err(SkgError::Argument("training set is empty".into()));
        }
        check_dims(self.bank.input_dim(), set.dim())?;
        let features = set
            .vectors()
            .iter()
            .map(|a| self.bank.feature_map(a))
            .collect::<Result<Vec<_>>>()?;
        let order = visiting_order(set.len(), epochs, seed);
        let mut predictions = Vec::with_capacity(order.len());
        let mut errors = Vec::with_capacity(order.len());
        for &i in &order {
            let (p, e) = self.step_features(&features[i], set.values()[i])?;
            predictions.push(p);
            errors.push(e);
        }
        Ok(TrainingTrace {
            epochs,
            order,
            predictions,
            errors,
        })
    }
}

/// Concatenation of `epochs` independent uniform permutations of `0..n`.
pub fn visiting_order(n: usize, epochs: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Order);
    let mut order = Vec::with_capacity(n * epochs);
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        perm.shuffle(&mut rng);
        order.extend_from_slice(&perm);
    }
    order
}

/// On-disk model: the bank is regenerated from its seed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "M")]
    pub input_dim: usize,
    #[serde(rename = "D")]
    pub num_features: usize,
    pub sigma_sq: f64,
    pub eta: f64,
    pub bank_seed: u64,
    pub theta: Vec<f64>,
    /// Referencing node ids defining the adjacency-vector columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referencing: Option<Vec<NodeId>>,
    /// Multiply predictions by this to undo training-value normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_scale: Option<f64>,
}

impl ModelFile {
    pub fn from_model(model: &SkgModel, referencing: Option<Vec<NodeId>>) -> Self {
        let bank = model.bank();
        ModelFile {
            input_dim: bank.input_dim(),
            num_features: bank.num_features(),
            sigma_sq: bank.sigma_sq(),
            eta: model.eta(),
            bank_seed: bank.seed(),
            theta: model.theta().to_vec(),
            referencing,
            value_scale: None,
        }
    }

    pub fn into_model(self) -> Result<SkgModel> {
        if let Some(r) = &self.referencing {
            check_dims(self.input_dim, r.len())?;
        }
        let bank = sample_bank(self.sigma_sq, self.num_features, self.input_dim, self.bank_seed)?;
        SkgModel::with_theta(Arc::new(bank), self.eta, self.theta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
