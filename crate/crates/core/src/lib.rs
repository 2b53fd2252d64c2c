//! Single-kernel Gradraker (SKG): random-Fourier-feature regression over
//! graph adjacency vectors, trained by sequential least squares, with
//! closed-form choices of the Gaussian kernel variance σ².
//!
//! ```no_run
//! use skg::{planted_communities, select_for_run, run_once, CommunityParams, ExperimentConfig};
//!
//! let data = planted_communities(&CommunityParams::default(), 7)?;
//! let cfg = ExperimentConfig::default();
//! let report = select_for_run(&data, &cfg, 1, false)?;
//! let run = run_once(&data, &cfg, report.sigma_sq_ed, 1, false)?;
//! println!("σ²_ed = {:.3}, GNMSE = {:.4}", report.sigma_sq_ed, run.gnmse);
//! # Ok::<(), skg::SkgError>(())
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph_data;
pub mod harness;
pub mod model;
pub mod rff;
pub mod rng;
pub mod select;
pub mod synthetic;
pub mod weights;

pub use error::{ErrorKind, Result, SkgError};
pub use graph_data::{
    build_adjacency_vectors, load_graph, load_values, pairwise_l1_max, pairwise_stats, split_sample, AdjacencyVector,
    Graph, NodeId, NodeValues, Normalization, PairwiseStats, SplitManifest, TrainingSet,
};
pub use harness::{
    export_bf_trace, export_scatter, gnmse, run_once, select_for_run, sweep, sweep_with_seeds, Dataset,
    ExperimentConfig, GnmseResult, RunArtifacts, RunOutcome, SweepGrid,
};
pub use model::{visiting_order, ModelFile, SkgModel, TrainingTrace};
pub use rff::{feature_map, kernel_exact, sample_bank, FeatureVector, RandomFeatureBank};
pub use select::{select, NoiseSource, SelectOptions, SelectionReport};
pub use synthetic::{planted_communities, CommunityParams};
pub use weights::{Alpha, SimilarityMatrix, WeightAnalyzer, WeightTrace};
