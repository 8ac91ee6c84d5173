//! Graph edit distance upper bounds from node-priority programs.
//!
//! A priority program turns a graph pair into a node-pair weight matrix;
//! bipartite matching turns the matrix into a node mapping, and the mapping's
//! edit cost bounds the true distance from above. A small ensemble of such
//! programs is chosen greedily to minimize the summed bound over a training
//! corpus, and new programs are proposed by an islands-model evolutionary
//! loop around a pluggable generator.

pub mod evolution;
pub mod exact;
pub mod graph;
pub mod harness;
pub mod matching;
pub mod matrix;
pub mod par;
pub mod program;
pub mod selection;

pub use exact::{exact_ged, DEFAULT_NODE_LIMIT};
pub use graph::{
    ged_under_mapping, initial_weight_matrix, pad_to_equal_size, EditOp, GedValue, Graph,
    GraphError, Label, NodeMapping,
};
pub use matching::{ged_upper_bound, Matcher, MatcherKind};
pub use matrix::WeightMatrix;
pub use par::Execution;
