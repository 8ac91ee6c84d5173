//! Candidate generators.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pool::ContextProgram;
use super::prompt::{render_prompt, PROBLEM_TEMPLATE, TASK_TEMPLATE};
use super::rng::SeededRng;
use crate::program::{Builtin, DegreeNeighborParams, ProgramKind};

/// What a generator sees: problem and task text plus scored context
/// programs, worst first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub problem: String,
    pub task: String,
    pub context: Vec<ContextProgram>,
}

impl GeneratorRequest {
    pub fn new(context: Vec<ContextProgram>) -> Self {
        Self {
            problem: PROBLEM_TEMPLATE.to_string(),
            task: TASK_TEMPLATE.to_string(),
            context,
        }
    }

    pub fn prompt(&self) -> String {
        render_prompt(&self.problem, &self.task, &self.context)
    }
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    /// This call failed; the next one may succeed.
    #[error("transient generator failure: {0}")]
    Transient(String),
    /// The backend cannot be used any more.
    #[error("generator unavailable: {0}")]
    Unavailable(String),
}

pub trait CandidateGenerator {
    fn name(&self) -> &str;

    /// Proposes new programs for `request`. An unusable reply is an empty
    /// list, not an error.
    fn generate(&mut self, request: &GeneratorRequest) -> Result<Vec<ProgramKind>, GeneratorError>;

    /// Internal state for checkpoints; stateless generators return `None`.
    fn save_state(&self) -> Option<serde_json::Value> {
        None
    }

    fn restore_state(&mut self, _state: serde_json::Value) -> Result<(), GeneratorError> {
        Ok(())
    }
}

pub const DEFAULT_CANDIDATES_PER_CALL: usize = 2;

const WEIGHT_RANGE: (f64, f64) = (0.05, 20.0);
const EXPONENT_RANGE: (f64, f64) = (0.25, 4.0);
const MAX_JITTER: f64 = 0.5;

/// Deterministic stand-in for a code-writing model: perturbs the degree and
/// neighbor heuristic of the best context program (or the default blend if
/// the context holds none) and emits the results as builtins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededMutator {
    rng: SeededRng,
    per_call: usize,
}

impl SeededMutator {
    pub fn new(seed: u64) -> Self {
        Self::with_candidates(seed, DEFAULT_CANDIDATES_PER_CALL)
    }

    pub fn with_candidates(seed: u64, per_call: usize) -> Self {
        Self {
            rng: SeededRng::new(seed),
            per_call: per_call.max(1),
        }
    }

    fn scale(&mut self, value: f64, spread: f64, range: (f64, f64)) -> f64 {
        let factor = self.rng.random_range(-spread..=spread).exp();
        round3((value * factor).clamp(range.0, range.1))
    }

    pub fn mutate(&mut self, base: &DegreeNeighborParams) -> DegreeNeighborParams {
        let mut p = base.clone();
        p.label_weight = self.scale(p.label_weight, 0.7, WEIGHT_RANGE);
        p.degree_weight = self.scale(p.degree_weight.max(WEIGHT_RANGE.0), 0.9, WEIGHT_RANGE);
        p.neighbor_weight = self.scale(p.neighbor_weight.max(WEIGHT_RANGE.0), 0.9, WEIGHT_RANGE);
        p.degree_exponent = self.scale(p.degree_exponent, 0.6, EXPONENT_RANGE);
        p.neighbor_exponent = self.scale(p.neighbor_exponent, 0.6, EXPONENT_RANGE);
        // Tie-breaking noise gives otherwise equal scores distinct mappings.
        if self.rng.random_bool(0.5) {
            p.jitter = round3(self.rng.random_range(0.0..MAX_JITTER));
            p.jitter_seed = self.rng.random();
        }
        p
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

impl CandidateGenerator for SeededMutator {
    fn name(&self) -> &str {
        "seeded_mutator"
    }

    fn generate(&mut self, request: &GeneratorRequest) -> Result<Vec<ProgramKind>, GeneratorError> {
        let base = request
            .context
            .iter()
            .rev()
            .find_map(|c| match &c.program.kind {
                ProgramKind::Builtin {
                    builtin: Builtin::DegreeNeighbor(p),
                } => Some(p.clone()),
                _ => None,
            })
            .unwrap_or_default();
        Ok((0..self.per_call)
            .map(|_| Builtin::DegreeNeighbor(self.mutate(&base)).into())
            .collect())
    }

    fn save_state(&self) -> Option<serde_json::Value> {
        serde_json::to_value(self).ok()
    }

    fn restore_state(&mut self, state: serde_json::Value) -> Result<(), GeneratorError> {
        *self = serde_json::from_value(state).map_err(|e| GeneratorError::Unavailable(format!("bad mutator state: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{PriorityProgram, ProgramId};

    fn request() -> GeneratorRequest {
        GeneratorRequest::new(vec![ContextProgram {
            program: PriorityProgram::zero(ProgramId(0)),
            score: 0,
        }])
    }

    #[test]
    fn same_seed_same_candidates() {
        let mut a = SeededMutator::new(42);
        let mut b = SeededMutator::new(42);
        for _ in 0..20 {
            assert_eq!(a.generate(&request()).unwrap(), b.generate(&request()).unwrap());
        }
        assert_ne!(
            SeededMutator::new(1).generate(&request()).unwrap(),
            SeededMutator::new(2).generate(&request()).unwrap()
        );
    }

    #[test]
    fn parameters_stay_in_range() {
        let mut m = SeededMutator::new(5);
        let mut p = DegreeNeighborParams::default();
        for _ in 0..500 {
            p = m.mutate(&p);
            for w in [p.label_weight, p.degree_weight, p.neighbor_weight] {
                assert!((WEIGHT_RANGE.0..=WEIGHT_RANGE.1).contains(&w));
            }
            for e in [p.degree_exponent, p.neighbor_exponent] {
                assert!((EXPONENT_RANGE.0..=EXPONENT_RANGE.1).contains(&e));
            }
            assert!((0.0..MAX_JITTER).contains(&p.jitter));
        }
    }

    #[test]
    fn state_round_trip() {
        let mut a = SeededMutator::new(8);
        a.generate(&request()).unwrap();
        let mut b = SeededMutator::new(0);
        b.restore_state(a.save_state().unwrap()).unwrap();
        assert_eq!(a.generate(&request()).unwrap(), b.generate(&request()).unwrap());
    }
}
