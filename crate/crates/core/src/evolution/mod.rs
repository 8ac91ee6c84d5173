//! Islands-model evolutionary search over priority programs.

pub mod generator;
pub mod llm;
pub mod pool;
pub mod prompt;
pub mod rng;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::program::{ProgramId, RunnerError};
use crate::selection::SelectionError;

pub use generator::{CandidateGenerator, GeneratorError, GeneratorRequest, SeededMutator};
pub use llm::{LlmBackend, LlmConfig};
pub use pool::{ContextProgram, Island, Pool, PoolEntry};
pub use run::{run_evolution, resume_evolution, Checkpoint, EvolutionConfig, EvolutionOutcome, IterationRecord, StopReason};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("program {0} is already registered")]
    DuplicateProgram(ProgramId),
    #[error("the program pool is empty")]
    EmptyPool,
    #[error("seed program failed the filter: {0}")]
    SeedRejected(String),
    #[error("generator unavailable: {reason}; checkpoint at {}", checkpoint.as_ref().map_or("<none>".into(), |p| p.display().to_string()))]
    BackendUnavailable {
        reason: String,
        checkpoint: Option<PathBuf>,
    },
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}
