//! Data files, metrics, inference and the bundled toy corpora.

pub mod corpus;
pub mod infer;
pub mod io;
pub mod metrics;

use std::path::Path;

use thiserror::Error;

use crate::graph::GraphError;
use crate::program::RunnerError;

pub use corpus::{bundled_corpus, generate_corpus, CorpusKind};
pub use infer::{infer, EvalReport, InferOptions, PairPrediction};
pub use io::{load_pairs, read_pairs, write_pairs, GraphFile, GraphPair, PairRecord};
pub use metrics::{emr, rmse};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
