//! Planted-community graphs whose node values follow their community.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkgError};
use crate::graph_data::{Graph, NodeId, NodeValues};
use crate::harness::Dataset;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityParams {
    pub nodes: usize,
    pub communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Community c gets mean `means[c % means.len()]`.
    pub means: Vec<f64>,
    pub value_noise: f64,
}

impl Default for CommunityParams {
    fn default() -> Self {
        CommunityParams {
            nodes: 200,
            communities: 4,
            p_in: 0.6,
            p_out: 0.02,
            means: vec![-1.5, -0.5, 0.5, 1.5],
            value_noise: 0.1,
        }
    }
}

/// Node `i` belongs to community `i % communities`; ids are "0", "1", ...
pub fn planted_communities(params: &CommunityParams, seed: u64) -> Result<Dataset> {
    let p = params;
    if p.nodes < 2 || p.communities == 0 || p.means.is_empty() {
        return Err(SkgError::Argument("need ≥ 2 nodes, ≥ 1 community and ≥ 1 mean".into()));
    }
    let prob_ok = |x: f64| (0.0..=1.0).contains(&x);
    if !prob_ok(p.p_in) || !prob_ok(p.p_out) || !(p.value_noise >= 0.0) {
        return Err(SkgError::Argument(
            "probabilities must lie in [0, 1] and noise be ≥ 0".into(),
        ));
    }
    let mut rng = stream_rng(seed, Stream::Data);
    let noise = Normal::new(0.0, p.value_noise).map_err(|e| SkgError::Argument(e.to_string()))?;
    let community = |i: usize| i % p.communities;

    let mut graph = Graph::new(false);
    for i in 0..p.nodes {
        graph.add_node(NodeId::from(i as u64));
    }
    for i in 0..p.nodes {
        for j in i + 1..p.nodes {
            let prob = if community(i) == community(j) { p.p_in } else { p.p_out };
            if rng.random::<f64>() < prob {
                graph.add_edge(NodeId::from(i as u64), NodeId::from(j as u64), 1.0)?;
            }
        }
    }
    let values = (0..p.nodes)
        .map(|i| {
            let mean = p.means[community(i) % p.means.len()];
            (NodeId::from(i as u64), mean + noise.sample(&mut rng))
        })
        .collect();
    Ok(Dataset::new(graph, NodeValues::new(values)?))
}
