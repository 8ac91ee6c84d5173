//! Budgeted ensemble selection.
//!
//! For a set of programs `A` over training pairs `T`,
//! `J(A) = sum_t min_{p in A} ub[p][t]` where `ub[p][t]` is the edit cost of
//! program `p`'s mapping on pair `t`. `J` is monotone nonincreasing and its
//! reductions are submodular, so the greedy rule (add the program with the
//! largest reduction) is a `1 - 1/e` approximation of the best budget-`b`
//! subset for the reduction `J(empty) - J(A)`.
//!
//! `J(empty)` is defined with a per-pair ceiling `n^2 + n`, above any cost a
//! mapping between two `n`-node graphs can have.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{initial_weight_matrix, pad_to_equal_size, GedValue, Graph};
use crate::matching::{ged_upper_bound, Matcher};
use crate::matrix::WeightMatrix;
use crate::par::Execution;
use crate::program::{evaluate_program, ExecOutcome, ExternalRunner, PriorityProgram, ProgramId, RunnerError};

pub const DEFAULT_BUDGET: usize = 15;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("unknown program {0}")]
    UnknownProgram(ProgramId),
    #[error("program {0} already has a row")]
    DuplicateProgram(ProgramId),
    #[error("row for {id} has {found} entries, corpus has {expected} pairs")]
    RowLength {
        id: ProgramId,
        expected: usize,
        found: usize,
    },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("no candidate programs")]
    NoCandidates,
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error("manifest i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest format: {0}")]
    Format(#[from] serde_json::Error),
}

/// A padded pair with its label-agreement matrix.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub g1: Graph,
    pub g2: Graph,
    pub w0: WeightMatrix,
}

impl TrainPair {
    pub fn new(g1: &Graph, g2: &Graph) -> Self {
        let (g1, g2) = pad_to_equal_size(g1, g2);
        let w0 = initial_weight_matrix(&g1, &g2);
        Self { g1, g2, w0 }
    }

    pub fn size(&self) -> usize {
        self.g1.len()
    }
}

/// Training pairs. No distances are stored; selection only sees bounds.
#[derive(Debug, Clone)]
pub struct TrainCorpus {
    pairs: Vec<TrainPair>,
}

impl TrainCorpus {
    pub fn new<'a>(pairs: impl IntoIterator<Item = (&'a Graph, &'a Graph)>) -> Result<Self, SelectionError> {
        let pairs: Vec<TrainPair> = pairs.into_iter().map(|(a, b)| TrainPair::new(a, b)).collect();
        if pairs.is_empty() {
            return Err(SelectionError::EmptyCorpus);
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[TrainPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pairs.iter().map(TrainPair::size).collect()
    }
}

/// Per-pair ceiling used for the empty ensemble.
pub fn pair_ceiling(n: usize) -> GedValue {
    (n * n + n) as GedValue
}

/// Cached bounds `ub[program][pair]` for programs that passed the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pair_sizes: Vec<usize>,
    rows: BTreeMap<ProgramId, Vec<GedValue>>,
}

impl BoundTable {
    pub fn new(pair_sizes: Vec<usize>) -> Self {
        Self {
            pair_sizes,
            rows: BTreeMap::new(),
        }
    }

    pub fn for_corpus(corpus: &TrainCorpus) -> Self {
        Self::new(corpus.sizes())
    }

    pub fn pair_count(&self) -> usize {
        self.pair_sizes.len()
    }

    pub fn insert(&mut self, id: ProgramId, row: Vec<GedValue>) -> Result<(), SelectionError> {
        if row.len() != self.pair_sizes.len() {
            return Err(SelectionError::RowLength {
                id,
                expected: self.pair_sizes.len(),
                found: row.len(),
            });
        }
        if self.rows.contains_key(&id) {
            return Err(SelectionError::DuplicateProgram(id));
        }
        self.rows.insert(id, row);
        Ok(())
    }

    pub fn row(&self, id: ProgramId) -> Result<&[GedValue], SelectionError> {
        self.rows
            .get(&id)
            .map(Vec::as_slice)
            .ok_or(SelectionError::UnknownProgram(id))
    }

    pub fn contains(&self, id: ProgramId) -> bool {
        self.rows.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ProgramId> + '_ {
        self.rows.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ceilings(&self) -> Vec<GedValue> {
        self.pair_sizes.iter().map(|&n| pair_ceiling(n)).collect()
    }
}

/// `J` of an arbitrary program set.
pub fn objective_j(programs: &[ProgramId], table: &BoundTable) -> Result<GedValue, SelectionError> {
    let mut minima = table.ceilings();
    for &id in programs {
        for (m, &v) in minima.iter_mut().zip(table.row(id)?) {
            *m = (*m).min(v);
        }
    }
    Ok(minima.iter().sum())
}

/// Ordered selection with running per-pair minima.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ensemble {
    members: Vec<ProgramId>,
    /// Reduction of `J` when each member was added.
    admission_scores: Vec<GedValue>,
    minima: Vec<GedValue>,
    j: GedValue,
}

impl Ensemble {
    pub fn empty(table: &BoundTable) -> Self {
        let minima = table.ceilings();
        let j = minima.iter().sum();
        Self {
            members: Vec::new(),
            admission_scores: Vec::new(),
            minima,
            j,
        }
    }

    pub fn members(&self) -> &[ProgramId] {
        &self.members
    }

    pub fn admission_scores(&self) -> &[GedValue] {
        &self.admission_scores
    }

    pub fn minima(&self) -> &[GedValue] {
        &self.minima
    }

    pub fn j(&self) -> GedValue {
        self.j
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: ProgramId) -> bool {
        self.members.contains(&id)
    }

    pub fn score_of(&self, id: ProgramId) -> Option<GedValue> {
        self.members
            .iter()
            .position(|&m| m == id)
            .map(|k| self.admission_scores[k])
    }

    /// Appends `id` and returns its admission score.
    pub fn push(&mut self, id: ProgramId, table: &BoundTable) -> Result<GedValue, SelectionError> {
        let row = table.row(id)?;
        let mut j = 0;
        for (m, &v) in self.minima.iter_mut().zip(row) {
            *m = (*m).min(v);
            j += *m;
        }
        let gain = self.j - j;
        self.j = j;
        self.members.push(id);
        self.admission_scores.push(gain);
        Ok(gain)
    }
}

/// `J(A) - J(A + p)`, the (non-negative) reduction from adding `p`.
pub fn marginal_gain(ensemble: &Ensemble, id: ProgramId, table: &BoundTable) -> Result<GedValue, SelectionError> {
    let row = table.row(id)?;
    Ok(ensemble
        .minima
        .iter()
        .zip(row)
        .map(|(&m, &v)| m.saturating_sub(v))
        .sum())
}

fn candidate_set(candidates: &[ProgramId], b: usize, table: &BoundTable) -> Result<BTreeSet<ProgramId>, SelectionError> {
    if b == 0 {
        return Err(SelectionError::ZeroBudget);
    }
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let set: BTreeSet<ProgramId> = candidates.iter().copied().collect();
    if let Some(&missing) = set.iter().find(|id| !table.contains(**id)) {
        return Err(SelectionError::UnknownProgram(missing));
    }
    Ok(set)
}

/// Greedy selection of up to `b` programs: each step adds the largest
/// reduction, ties to the lower id. Zero-gain steps still fill the budget.
/// Uses lazy evaluation; the result equals [`greedy_select_naive`].
pub fn greedy_select(candidates: &[ProgramId], b: usize, table: &BoundTable) -> Result<Ensemble, SelectionError> {
    let set = candidate_set(candidates, b, table)?;
    let mut ensemble = Ensemble::empty(table);
    // Stale gains only overestimate (submodularity), so a refreshed top that
    // still beats the next stale key is the true argmax.
    let mut heap = BinaryHeap::with_capacity(set.len());
    for &id in &set {
        heap.push((marginal_gain(&ensemble, id, table)?, Reverse(id)));
    }
    while ensemble.len() < b {
        let Some((_, Reverse(id))) = heap.pop() else {
            break;
        };
        let fresh = marginal_gain(&ensemble, id, table)?;
        if heap.peek().is_none_or(|top| (fresh, Reverse(id)) >= *top) {
            ensemble.push(id, table)?;
        } else {
            heap.push((fresh, Reverse(id)));
        }
    }
    Ok(ensemble)
}

/// Plain greedy that rescans every remaining candidate each step.
pub fn greedy_select_naive(candidates: &[ProgramId], b: usize, table: &BoundTable) -> Result<Ensemble, SelectionError> {
    let mut remaining = candidate_set(candidates, b, table)?;
    let mut ensemble = Ensemble::empty(table);
    while ensemble.len() < b && !remaining.is_empty() {
        let mut best: Option<(GedValue, Reverse<ProgramId>)> = None;
        for &id in &remaining {
            let key = (marginal_gain(&ensemble, id, table)?, Reverse(id));
            if best.is_none_or(|b| key > b) {
                best = Some(key);
            }
        }
        let (_, Reverse(id)) = best.expect("remaining is non-empty");
        remaining.remove(&id);
        ensemble.push(id, table)?;
    }
    Ok(ensemble)
}

/// Why a program failed the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub pair: usize,
    pub outcome: ExecOutcome,
}

/// Runs `program` on every training pair and matches its weights. Any
/// failing pair rejects the program; remaining pairs are then skipped.
pub fn evaluate_row(
    program: &PriorityProgram,
    corpus: &TrainCorpus,
    runner: &ExternalRunner,
    matcher: &Matcher,
    exec: Execution,
) -> Result<Result<Vec<GedValue>, Rejection>, RunnerError> {
    let failed = AtomicBool::new(false);
    let results = exec.map(corpus.pairs(), |pair| -> Result<Option<Result<GedValue, ExecOutcome>>, RunnerError> {
        if failed.load(Ordering::Relaxed) {
            return Ok(None);
        }
        let outcome = evaluate_program(program, &pair.g1, &pair.g2, &pair.w0, runner)?;
        let bound = match outcome {
            ExecOutcome::Ok(w) => match ged_upper_bound(&pair.g1, &pair.g2, &w, matcher) {
                Ok((cost, _)) => Ok(cost),
                Err(e) => Err(ExecOutcome::Malformed(e.to_string())),
            },
            other => Err(other),
        };
        if bound.is_err() {
            failed.store(true, Ordering::Relaxed);
        }
        Ok(Some(bound))
    });
    let mut row = Vec::with_capacity(corpus.len());
    let mut rejection = None;
    for (pair, r) in results.into_iter().enumerate() {
        match r? {
            Some(Ok(v)) => row.push(v),
            Some(Err(outcome)) if rejection.is_none() => rejection = Some(Rejection { pair, outcome }),
            _ => {}
        }
    }
    Ok(match rejection {
        Some(r) => Err(r),
        None => Ok(row),
    })
}

/// One selected program in an exported ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub program: PriorityProgram,
    pub score: GedValue,
}

/// Exported ensemble: everything inference needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub matcher: Matcher,
    pub budget: usize,
    /// Training objective of the selection.
    pub objective: GedValue,
    pub programs: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl EnsembleManifest {
    pub fn from_ensemble<'a>(
        ensemble: &Ensemble,
        mut lookup: impl FnMut(ProgramId) -> Option<&'a PriorityProgram>,
        matcher: Matcher,
        budget: usize,
    ) -> Result<Self, SelectionError> {
        let programs = ensemble
            .members()
            .iter()
            .zip(ensemble.admission_scores())
            .map(|(&id, &score)| {
                lookup(id)
                    .cloned()
                    .map(|program| ManifestEntry { program, score })
                    .ok_or(SelectionError::UnknownProgram(id))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            matcher,
            budget,
            objective: ensemble.j(),
            programs,
        })
    }

    /// Reads `path`, or `path/manifest.json` when `path` is a directory.
    pub fn load(path: &Path) -> Result<Self, SelectionError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        Ok(serde_json::from_str(&fs::read_to_string(file)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SelectionError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        fs::write(file, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
