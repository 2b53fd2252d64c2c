//! Loading graphs and nodal values, and turning them into training data.
//!
//! Edge lists are UTF-8 CSV with one `src,dst[,weight]` record per line and
//! `#` comments. Node-value files are `node_id,value` CSV. A node's
//! adjacency vector lists, for every referencing node in order, the weight of
//! the edge leaving the node toward it (0 when absent). For undirected graphs
//! every edge is visible from both endpoints.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Result, SkgError};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub weight: f64,
}

/// A weighted graph with nodes registered in first-seen order.
#[derive(Debug, Clone)]
pub struct Graph {
    directed: bool,
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    // outgoing weights per node; undirected edges are stored in both rows
    out: Vec<HashMap<usize, f64>>,
}

impl Graph {
    pub fn new(directed: bool) -> Self {
        Graph {
            directed,
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            out: Vec::new(),
        }
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    /// Registers a node if absent and returns its position.
    pub fn add_node(&mut self, id: NodeId) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.nodes.len();
        self.index.insert(id.clone(), i);
        self.nodes.push(id);
        self.out.push(HashMap::new());
        i
    }

    /// Adds an edge. A repeated `(source, target)` pair overwrites the
    /// earlier weight.
    pub fn add_edge(&mut self, source: NodeId, target: NodeId, weight: f64) -> Result<()> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(SkgError::Validation(format!(
                "edge {source}->{target} has invalid weight {weight}"
            )));
        }
        let s = self.add_node(source.clone());
        let t = self.add_node(target.clone());
        self.out[s].insert(t, weight);
        if !self.directed {
            self.out[t].insert(s, weight);
        }
        self.edges.push(Edge { source, target, weight });
        Ok(())
    }

    fn position(&self, id: &NodeId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| SkgError::UnknownNode(id.to_string()))
    }

    /// Weight of the edge leaving `source` toward `target`, 0 when absent.
    pub fn weight(&self, source: &NodeId, target: &NodeId) -> Result<f64> {
        let s = self.position(source)?;
        let t = self.position(target)?;
        Ok(self.out[s].get(&t).copied().unwrap_or(0.0))
    }

    pub fn out_degree(&self, id: &NodeId) -> Result<usize> {
        Ok(self.out[self.position(id)?].len())
    }

    /// Parses an edge list. Unweighted graphs ignore any third column.
    pub fn from_edge_list<R: BufRead>(reader: R, weighted: bool, directed: bool) -> Result<Self> {
        let mut graph = Graph::new(directed);
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 || fields[0].is_empty() || fields[1].is_empty() {
                return Err(SkgError::Parse {
                    line: line_no,
                    message: format!("expected `src,dst[,weight]`, got `{line}`"),
                });
            }
            let weight = match (weighted, fields.get(2)) {
                (true, Some(w)) => w.parse::<f64>().map_err(|_| SkgError::Parse {
                    line: line_no,
                    message: format!("bad weight `{w}`"),
                })?,
                _ => 1.0,
            };
            if !weight.is_finite() || weight < 0.0 {
                return Err(SkgError::Validation(format!(
                    "line {line_no}: weight {weight} must be finite and nonnegative"
                )));
            }
            graph.add_edge(NodeId::from(fields[0]), NodeId::from(fields[1]), weight)?;
        }
        Ok(graph)
    }

    /// Nodes from `candidates` that have at least one outgoing edge.
    pub fn drop_isolated(&self, candidates: &[NodeId]) -> Result<Vec<NodeId>> {
        let mut kept = Vec::with_capacity(candidates.len());
        for id in candidates {
            if !self.out[self.position(id)?].is_empty() {
                kept.push(id.clone());
            }
        }
        Ok(kept)
    }
}

pub fn load_graph(path: impl AsRef<Path>, weighted: bool, directed: bool) -> Result<Graph> {
    let file = fs::File::open(path)?;
    Graph::from_edge_list(std::io::BufReader::new(file), weighted, directed)
}

/// Nodal values in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeValues {
    entries: Vec<(NodeId, f64)>,
    index: HashMap<NodeId, usize>,
}

impl NodeValues {
    pub fn new(entries: Vec<(NodeId, f64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (id, v)) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(SkgError::Validation(format!("node {id} has non-finite value")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(SkgError::Validation(format!("duplicate value for node {id}")));
            }
        }
        Ok(NodeValues { entries, index })
    }

    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen_data = false;
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_data && line.eq_ignore_ascii_case("node_id,value") {
                seen_data = true;
                continue;
            }
            seen_data = true;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 || fields[0].is_empty() {
                return Err(SkgError::Parse {
                    line: line_no,
                    message: format!("expected `node_id,value`, got `{line}`"),
                });
            }
            let value = fields[1].parse::<f64>().map_err(|_| SkgError::Parse {
                line: line_no,
                message: format!("bad value `{}`", fields[1]),
            })?;
            entries.push((NodeId::from(fields[0]), value));
        }
        Self::new(entries)
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.entries.iter().map(|(id, _)| id.clone()).collect()
    }

    pub fn entries(&self) -> &[(NodeId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &NodeId) -> Option<f64> {
        self.index.get(id).map(|&i| self.entries[i].1)
    }

    pub fn value(&self, id: &NodeId) -> Result<f64> {
        self.get(id).ok_or_else(|| SkgError::UnknownNode(id.to_string()))
    }
}

pub fn load_values(path: impl AsRef<Path>) -> Result<NodeValues> {
    let file = fs::File::open(path)?;
    NodeValues::from_csv(std::io::BufReader::new(file))
}

/// Connection weights from one node to each referencing node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdjacencyVector(Vec<f64>);

impl AdjacencyVector {
    pub fn new(entries: Vec<f64>) -> Self {
        AdjacencyVector(entries)
    }

    pub fn zeros(len: usize) -> Self {
        AdjacencyVector(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Squared Euclidean distance, ‖a − b‖².
    pub fn sq_distance(&self, other: &AdjacencyVector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// l1 distance, ‖a − b‖₁.
    pub fn l1_distance(&self, other: &AdjacencyVector) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum())
    }

    pub fn scaled(&self, factor: f64) -> AdjacencyVector {
        AdjacencyVector(self.0.iter().map(|x| x * factor).collect())
    }
}

/// Builds one adjacency vector per sampled node against `referencing`.
pub fn build_adjacency_vectors(
    graph: &Graph,
    sampled: &[NodeId],
    referencing: &[NodeId],
) -> Result<Vec<AdjacencyVector>> {
    if referencing.is_empty() {
        return Err(SkgError::Argument("referencing node set is empty".into()));
    }
    let mut columns = Vec::with_capacity(referencing.len());
    let mut seen = HashMap::with_capacity(referencing.len());
    for id in referencing {
        if seen.insert(id, ()).is_some() {
            return Err(SkgError::Validation(format!("referencing node {id} listed twice")));
        }
        columns.push(graph.position(id)?);
    }
    sampled
        .iter()
        .map(|id| {
            let row = &graph.out[graph.position(id)?];
            Ok(AdjacencyVector(
                columns.iter().map(|c| row.get(c).copied().unwrap_or(0.0)).collect(),
            ))
        })
        .collect()
}

/// Sampled nodes paired with their values, ready for training.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    node_ids: Vec<NodeId>,
    vectors: Vec<AdjacencyVector>,
    values: Vec<f64>,
}

impl TrainingSet {
    pub fn new(node_ids: Vec<NodeId>, vectors: Vec<AdjacencyVector>, values: Vec<f64>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(SkgError::Argument("training set is empty".into()));
        }
        check_dims(vectors.len(), values.len())?;
        check_dims(vectors.len(), node_ids.len())?;
        let m = vectors[0].len();
        for v in &vectors {
            check_dims(m, v.len())?;
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SkgError::Numeric(format!("non-finite training value {v}")));
        }
        Ok(TrainingSet {
            node_ids,
            vectors,
            values,
        })
    }

    /// Training set with synthetic ids `0..N`.
    pub fn from_pairs(vectors: Vec<AdjacencyVector>, values: Vec<f64>) -> Result<Self> {
        let ids = (0..vectors.len() as u64).map(NodeId::from).collect();
        Self::new(ids, vectors, values)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Length M of every adjacency vector.
    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn vectors(&self) -> &[AdjacencyVector] {
        &self.vectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseStats {
    pub pair_count: usize,
    pub d_sq_max: f64,
    pub d_sq_min_nonzero: Option<f64>,
    /// Distinct ‖d‖² values in increasing order with their pair counts.
    pub histogram: Vec<(f64, usize)>,
}

fn pair_values<F>(vectors: &[AdjacencyVector], metric: F) -> Result<Vec<f64>>
where
    F: Fn(&AdjacencyVector, &AdjacencyVector) -> Result<f64> + Sync,
{
    if vectors.len() < 2 {
        return Err(SkgError::Argument(format!(
            "pairwise statistics need at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..vectors.len() - 1)
        .into_par_iter()
        .map(|i| {
            vectors[i + 1..]
                .iter()
                .map(|b| metric(&vectors[i], b))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Statistics of ‖a_i − a_j‖² over all unordered pairs.
pub fn pairwise_stats(vectors: &[AdjacencyVector]) -> Result<PairwiseStats> {
    let mut values = pair_values(vectors, |a, b| a.sq_distance(b))?;
    values.sort_by(f64::total_cmp);
    let mut histogram: Vec<(f64, usize)> = Vec::new();
    for v in &values {
        match histogram.last_mut() {
            Some((last, count)) if *last == *v => *count += 1,
            _ => histogram.push((*v, 1)),
        }
    }
    Ok(PairwiseStats {
        pair_count: values.len(),
        d_sq_max: *values.last().expect("at least one pair"),
        d_sq_min_nonzero: values.iter().copied().find(|&v| v > 0.0),
        histogram,
    })
}

/// Largest ‖a_i − a_j‖₁ over all unordered pairs.
pub fn pairwise_l1_max(vectors: &[AdjacencyVector]) -> Result<f64> {
    Ok(pair_values(vectors, |a, b| a.l1_distance(b))?
        .into_iter()
        .fold(0.0, f64::max))
}

/// How nodal values are rescaled before training and scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by the largest absolute training value.
    #[default]
    MaxAbs,
    /// Leave values untouched.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub scale: f64,
    pub train: Vec<f64>,
    pub other: Vec<f64>,
}

impl Normalization {
    pub fn apply(self, train: &[f64], other: &[f64]) -> Result<Normalized> {
        match self {
            Normalization::MaxAbs => normalize_values(train, other),
            Normalization::Identity => Ok(Normalized {
                scale: 1.0,
                train: train.to_vec(),
                other: other.to_vec(),
            }),
        }
    }
}

/// Divides every value by the largest absolute training value.
pub fn normalize_values(train: &[f64], other: &[f64]) -> Result<Normalized> {
    let scale = train.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(SkgError::Degenerate(
            "training values are all zero (or non-finite); cannot normalize".into(),
        ));
    }
    Ok(Normalized {
        scale,
        train: train.iter().map(|v| v / scale).collect(),
        other: other.iter().map(|v| v / scale).collect(),
    })
}

/// A sampled/tested partition, both halves in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fraction: f64,
    pub sampled: Vec<NodeId>,
    pub tested: Vec<NodeId>,
}

impl SplitManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Randomly selects `round(fraction × n)` nodes as sampled; the rest are tested.
pub fn split_sample(node_ids: &[NodeId], fraction: f64, seed: u64) -> Result<SplitManifest> {
    if node_ids.is_empty() {
        return Err(SkgError::Argument("cannot split an empty node list".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SkgError::Argument(format!("sample fraction {fraction} outside (0, 1]")));
    }
    let n = node_ids.len();
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Split));
    let mut chosen = vec![false; n];
    for &i in &order[..k] {
        chosen[i] = true;
    }
    let (mut sampled, mut tested) = (Vec::with_capacity(k), Vec::with_capacity(n - k));
    for (id, &c) in node_ids.iter().zip(&chosen) {
        if c {
            sampled.push(id.clone());
        } else {
            tested.push(id.clone());
        }
    }
    Ok(SplitManifest {
        seed,
        fraction,
        sampled,
        tested,
    })
}
