//! Ensemble inference: the prediction for a pair is the smallest bound any
//! ensemble program achieves, together with the mapping that achieves it.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use super::io::GraphPair;
use super::metrics::{emr, rmse};
use super::HarnessError;
use crate::graph::{edit_path, initial_weight_matrix, pad_to_equal_size, EditOp, GedValue, NodeMapping};
use crate::matching::{ged_upper_bound, Matcher};
use crate::par::Execution;
use crate::program::{evaluate_program, ExecOutcome, ExternalRunner, PriorityProgram, ProgramId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub index: usize,
    /// Missing only when every program failed on the pair.
    pub prediction: Option<GedValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_ged: Option<GedValue>,
    /// Mapping between the padded graphs; dummies follow the real nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<NodeMapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<ProgramId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_path: Option<Vec<EditOp>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub total_seconds: f64,
    pub mean_pair_seconds: f64,
    pub max_pair_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matcher: Matcher,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub pairs: Vec<PairPrediction>,
    /// Over pairs that have both a prediction and a truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emr: Option<f64>,
    pub errors: usize,
    pub timing: TimingStats,
}

impl EvalReport {
    pub fn predictions(&self) -> Vec<Option<GedValue>> {
        self.pairs.iter().map(|p| p.prediction).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InferOptions {
    pub edit_paths: bool,
}

fn predict_pair(
    index: usize,
    pair: &GraphPair,
    programs: &[PriorityProgram],
    matcher: &Matcher,
    runner: &ExternalRunner,
    options: InferOptions,
) -> Result<PairPrediction, HarnessError> {
    let started = Instant::now();
    let (g1, g2) = pad_to_equal_size(&pair.g1, &pair.g2);
    let w0 = initial_weight_matrix(&g1, &g2);
    let mut best: Option<(GedValue, NodeMapping, ProgramId)> = None;
    let mut failures = Vec::new();
    for program in programs {
        let outcome = evaluate_program(program, &g1, &g2, &w0, runner)?;
        let ExecOutcome::Ok(w) = outcome else {
            warn!("pair {index}: program {} skipped: {}", program.id, outcome.summary());
            failures.push(format!("{}: {}", program.id, outcome.summary()));
            continue;
        };
        match ged_upper_bound(&g1, &g2, &w, matcher) {
            Ok((cost, mapping)) => {
                if best.as_ref().is_none_or(|b| cost < b.0) {
                    best = Some((cost, mapping, program.id));
                }
            }
            Err(e) => {
                warn!("pair {index}: program {} skipped: {e}", program.id);
                failures.push(format!("{}: {e}", program.id));
            }
        }
    }
    let edit = match (&best, options.edit_paths) {
        (Some((_, mapping, _)), true) => Some(edit_path(&g1, &g2, mapping)?),
        _ => None,
    };
    let (prediction, mapping, program) = match best {
        Some((c, m, p)) => (Some(c), Some(m), Some(p)),
        None => (None, None, None),
    };
    Ok(PairPrediction {
        index,
        prediction,
        true_ged: pair.true_ged,
        mapping,
        program,
        edit_path: edit,
        failures,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs every program on every pair and keeps the per-pair minimum; ties go
/// to the earlier program. Programs failing on a pair are skipped for it.
pub fn infer(
    programs: &[PriorityProgram],
    pairs: &[GraphPair],
    matcher: &Matcher,
    runner: &ExternalRunner,
    exec: Execution,
    options: InferOptions,
) -> Result<EvalReport, HarnessError> {
    if programs.is_empty() {
        return Err(HarnessError::Data("ensemble has no programs".into()));
    }
    let started = Instant::now();
    let indexed: Vec<(usize, &GraphPair)> = pairs.iter().enumerate().collect();
    let results = exec.map(&indexed, |&(k, pair)| predict_pair(k, pair, programs, matcher, runner, options));
    let predictions = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let total = started.elapsed().as_secs_f64();

    let (preds, truths): (Vec<GedValue>, Vec<GedValue>) = predictions
        .iter()
        .filter_map(|p| Some((p.prediction?, p.true_ged?)))
        .unzip();
    let (rmse, emr) = if preds.is_empty() {
        (None, None)
    } else {
        (Some(rmse(&preds, &truths)?), Some(emr(&preds, &truths)?))
    };
    let pair_times = predictions.iter().map(|p| p.seconds);
    let timing = TimingStats {
        total_seconds: total,
        mean_pair_seconds: if predictions.is_empty() {
            0.0
        } else {
            pair_times.clone().sum::<f64>() / predictions.len() as f64
        },
        max_pair_seconds: pair_times.fold(0.0, f64::max),
    };
    Ok(EvalReport {
        matcher: *matcher,
        manifest: None,
        errors: predictions.iter().filter(|p| p.prediction.is_none()).count(),
        pairs: predictions,
        rmse,
        emr,
        timing,
    })
}
