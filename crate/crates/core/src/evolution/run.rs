//! The training loop.
//!
//! Each iteration samples context programs from the pool, asks the generator
//! for candidates, filters them on every training pair, reruns greedy
//! selection over all surviving programs and registers the candidates with
//! their marginal contribution as score. The loop stops once the selection
//! objective has not improved for `patience` generator calls.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::generator::{CandidateGenerator, GeneratorError, GeneratorRequest};
use super::pool::{Pool, DEFAULT_CONTEXT_SIZE, DEFAULT_CULL_PERIOD, DEFAULT_ISLANDS, DEFAULT_SAMPLING_TEMPERATURE};
use super::EvolutionError;
use crate::graph::GedValue;
use crate::matching::Matcher;
use crate::par::Execution;
use crate::program::{ExternalRunner, PriorityProgram, ProgramId};
use crate::selection::{
    evaluate_row, greedy_select, marginal_gain, BoundTable, Ensemble, EnsembleManifest, TrainCorpus, DEFAULT_BUDGET,
};

pub const DEFAULT_PATIENCE: usize = 50;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub seed: u64,
    pub islands: usize,
    /// Programs shown to the generator per call.
    pub context_size: usize,
    pub budget: usize,
    pub sampling_temperature: f64,
    /// Registrations between culls; 0 disables culling.
    pub cull_period: usize,
    /// Generator calls without improvement before stopping.
    pub patience: usize,
    /// Improvements of at most this much do not reset patience.
    pub threshold: GedValue,
    pub max_iterations: usize,
    pub matcher: Matcher,
    pub execution: Execution,
    /// Iterations between checkpoints; 0 writes only at the end or on abort.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            islands: DEFAULT_ISLANDS,
            context_size: DEFAULT_CONTEXT_SIZE,
            budget: DEFAULT_BUDGET,
            sampling_temperature: DEFAULT_SAMPLING_TEMPERATURE,
            cull_period: DEFAULT_CULL_PERIOD,
            patience: DEFAULT_PATIENCE,
            threshold: 0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            matcher: Matcher::default(),
            execution: Execution::default(),
            checkpoint_every: 0,
            checkpoint_path: None,
        }
    }
}

impl EvolutionConfig {
    fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::Config(m.into()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.context_size == 0 {
            return bad("context size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub id: ProgramId,
    pub score: GedValue,
    pub island: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discarded {
    pub id: ProgramId,
    pub pair: usize,
    pub reason: String,
}

/// One generator call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub context: Vec<ProgramId>,
    pub proposed: usize,
    pub admitted: Vec<Admission>,
    pub discarded: Vec<Discarded>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_error: Option<String>,
    /// Objective after this call.
    pub objective: GedValue,
}

/// Complete search state; written to disk as JSON and resumable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: usize,
    pub pool: Pool,
    pub table: BoundTable,
    pub ensemble: Ensemble,
    /// Every program that passed the filter, including culled ones.
    pub programs: BTreeMap<ProgramId, PriorityProgram>,
    pub best_objective: GedValue,
    pub stale: usize,
    /// Objective after seeding, then after every generator call.
    pub trace: Vec<GedValue>,
    pub log: Vec<IterationRecord>,
    pub generator: Option<serde_json::Value>,
    pub stop: Option<StopReason>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, EvolutionError> {
        let cp: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(EvolutionError::Config(format!("unsupported checkpoint version {}", cp.version)));
        }
        Ok(cp)
    }

    /// Writes through a temporary file so a crash never leaves a torn
    /// checkpoint.
    pub fn save(&self, path: &Path) -> Result<(), EvolutionError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn manifest(&self, matcher: Matcher, budget: usize) -> Result<EnsembleManifest, EvolutionError> {
        Ok(EnsembleManifest::from_ensemble(
            &self.ensemble,
            |id| self.programs.get(&id),
            matcher,
            budget,
        )?)
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub manifest: EnsembleManifest,
    pub stop: StopReason,
    pub state: Checkpoint,
    pub elapsed: Duration,
}

impl EvolutionOutcome {
    pub fn trace(&self) -> &[GedValue] {
        &self.state.trace
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.state.ensemble
    }
}

fn seed_state(config: &EvolutionConfig, corpus: &TrainCorpus, runner: &ExternalRunner) -> Result<Checkpoint, EvolutionError> {
    let mut pool = Pool::new(config.islands, config.cull_period, config.sampling_temperature, config.seed)?;
    let mut table = BoundTable::for_corpus(corpus);
    let seed = PriorityProgram::zero(pool.allocate_id());
    let row = evaluate_row(&seed, corpus, runner, &config.matcher, config.execution)?
        .map_err(|r| EvolutionError::SeedRejected(format!("pair {}: {}", r.pair, r.outcome.summary())))?;
    table.insert(seed.id, row)?;
    let ensemble = greedy_select(&[seed.id], config.budget, &table)?;
    let score = ensemble.admission_scores()[0];
    let mut programs = BTreeMap::new();
    programs.insert(seed.id, seed.clone());
    pool.register(seed, score)?;
    let j = ensemble.j();
    Ok(Checkpoint {
        version: CHECKPOINT_VERSION,
        iteration: 0,
        pool,
        table,
        ensemble,
        programs,
        best_objective: j,
        stale: 0,
        trace: vec![j],
        log: Vec::new(),
        generator: None,
        stop: None,
    })
}

/// Runs the search from the zero seed program.
pub fn run_evolution(
    config: &EvolutionConfig,
    corpus: &TrainCorpus,
    generator: &mut dyn CandidateGenerator,
    runner: &ExternalRunner,
) -> Result<EvolutionOutcome, EvolutionError> {
    config.validate()?;
    let state = seed_state(config, corpus, runner)?;
    drive(state, config, corpus, generator, runner)
}

/// Continues a saved search. With the same configuration, corpus and
/// generator the result equals an uninterrupted run.
pub fn resume_evolution(
    mut checkpoint: Checkpoint,
    config: &EvolutionConfig,
    corpus: &TrainCorpus,
    generator: &mut dyn CandidateGenerator,
    runner: &ExternalRunner,
) -> Result<EvolutionOutcome, EvolutionError> {
    config.validate()?;
    if checkpoint.table.pair_count() != corpus.len() {
        return Err(EvolutionError::Config(format!(
            "checkpoint covers {} training pairs, corpus has {}",
            checkpoint.table.pair_count(),
            corpus.len()
        )));
    }
    if let Some(g) = checkpoint.generator.take() {
        generator
            .restore_state(g)
            .map_err(|e| EvolutionError::Config(e.to_string()))?;
    }
    // A stop at the iteration cap is lifted if the cap was raised.
    if checkpoint.stop == Some(StopReason::MaxIterations) {
        checkpoint.stop = None;
    }
    drive(checkpoint, config, corpus, generator, runner)
}

fn write_checkpoint(
    state: &mut Checkpoint,
    generator: &dyn CandidateGenerator,
    path: Option<&Path>,
) -> Result<(), EvolutionError> {
    state.generator = generator.save_state();
    if let Some(path) = path {
        state.save(path)?;
    }
    Ok(())
}

fn drive(
    mut state: Checkpoint,
    config: &EvolutionConfig,
    corpus: &TrainCorpus,
    generator: &mut dyn CandidateGenerator,
    runner: &ExternalRunner,
) -> Result<EvolutionOutcome, EvolutionError> {
    let started = Instant::now();
    let path = config.checkpoint_path.as_deref();
    while state.stop.is_none() {
        if state.iteration >= config.max_iterations {
            state.stop = Some(StopReason::MaxIterations);
            break;
        }
        state.iteration += 1;
        let context = state.pool.sample_context(config.context_size)?;
        let mut record = IterationRecord {
            iteration: state.iteration,
            context: context.iter().map(|c| c.program.id).collect(),
            proposed: 0,
            admitted: Vec::new(),
            discarded: Vec::new(),
            generator_error: None,
            objective: state.ensemble.j(),
        };
        match generator.generate(&GeneratorRequest::new(context)) {
            Ok(kinds) => {
                record.proposed = kinds.len();
                admit(&mut state, &mut record, kinds, config, corpus, runner)?;
            }
            Err(GeneratorError::Transient(reason)) => {
                warn!("iteration {}: generator call skipped: {reason}", state.iteration);
                record.generator_error = Some(reason);
            }
            Err(GeneratorError::Unavailable(reason)) => {
                record.generator_error = Some(reason.clone());
                state.log.push(record);
                state.iteration -= 1;
                write_checkpoint(&mut state, generator, path)?;
                return Err(EvolutionError::BackendUnavailable {
                    reason,
                    checkpoint: path.map(Path::to_path_buf),
                });
            }
        }

        let j = state.ensemble.j();
        record.objective = j;
        state.log.push(record);
        state.trace.push(j);
        if state.best_objective.saturating_sub(j) > config.threshold {
            state.best_objective = j;
            state.stale = 0;
        } else {
            state.stale += 1;
            if state.stale >= config.patience {
                state.stop = Some(StopReason::Patience);
            }
        }
        if config.checkpoint_every > 0 && state.iteration.is_multiple_of(config.checkpoint_every) {
            write_checkpoint(&mut state, generator, path)?;
        }
        info!(
            "iteration {}: objective {j}, ensemble {}, pool {}",
            state.iteration,
            state.ensemble.len(),
            state.pool.len()
        );
    }
    write_checkpoint(&mut state, generator, path)?;
    let stop = state.stop.expect("loop exits with a stop reason");
    Ok(EvolutionOutcome {
        manifest: state.manifest(config.matcher, config.budget)?,
        stop,
        state,
        elapsed: started.elapsed(),
    })
}

fn admit(
    state: &mut Checkpoint,
    record: &mut IterationRecord,
    kinds: Vec<crate::program::ProgramKind>,
    config: &EvolutionConfig,
    corpus: &TrainCorpus,
    runner: &ExternalRunner,
) -> Result<(), EvolutionError> {
    let mut passed = Vec::new();
    for kind in kinds {
        let program = PriorityProgram::new(state.pool.allocate_id(), kind, state.iteration);
        match evaluate_row(&program, corpus, runner, &config.matcher, config.execution)? {
            Ok(row) => {
                state.table.insert(program.id, row)?;
                state.programs.insert(program.id, program.clone());
                passed.push(program);
            }
            Err(rejection) => record.discarded.push(Discarded {
                id: program.id,
                pair: rejection.pair,
                reason: rejection.outcome.summary(),
            }),
        }
    }
    if passed.is_empty() {
        return Ok(());
    }
    let candidates: Vec<ProgramId> = state.table.ids().collect();
    let fresh = greedy_select(&candidates, config.budget, &state.table)?;
    // Greedy over a larger pool is not guaranteed to do better; keeping the
    // incumbent makes the objective nonincreasing.
    if fresh.j() <= state.ensemble.j() {
        state.ensemble = fresh;
    }
    for program in passed {
        let id = program.id;
        let score = match state.ensemble.score_of(id) {
            Some(s) => s,
            None => marginal_gain(&state.ensemble, id, &state.table)?,
        };
        let island = state.pool.register(program, score)?;
        record.admitted.push(Admission { id, score, island });
    }
    Ok(())
}
