mod common;

use ged_evolve::harness::corpus::{generate_records, CORPUS_PAIRS, CORPUS_SEED, MAX_NODES};
use ged_evolve::harness::io::{format_pairs, parse_pairs};
use ged_evolve::harness::{bundled_corpus, infer, CorpusKind, GraphFile, GraphPair, InferOptions, PairRecord};
use ged_evolve::program::{Builtin, ExternalRunner, PriorityProgram, ProgramId, ProgramKind, SandboxConfig};
use ged_evolve::{exact_ged, ged_upper_bound, initial_weight_matrix, pad_to_equal_size, Execution, Graph, Matcher, MatcherKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn runner() -> ExternalRunner {
    ExternalRunner::new(SandboxConfig::default()).unwrap()
}

fn builtins() -> Vec<PriorityProgram> {
    [Builtin::Zero, Builtin::LabelPassthrough, Builtin::degree_neighbor()]
        .into_iter()
        .enumerate()
        .map(|(k, b)| PriorityProgram::new(ProgramId(k as u64), b.into(), 0))
        .collect()
}

#[test]
fn bundled_corpora_match_regeneration() {
    for kind in CorpusKind::ALL {
        let regenerated = format_pairs(&generate_records(kind, CORPUS_SEED, CORPUS_PAIRS));
        assert_eq!(regenerated, kind.bundled_text(), "{kind}");
    }
}

#[test]
fn bundled_truths_are_exact() {
    for kind in CorpusKind::ALL {
        let pairs = bundled_corpus(kind).unwrap();
        assert_eq!(pairs.len(), 50);
        for p in &pairs {
            assert!(p.g1.len().max(p.g2.len()) <= MAX_NODES);
            let (g1, g2) = pad_to_equal_size(&p.g1, &p.g2);
            assert_eq!(p.true_ged, Some(common::brute_force_ged(&g1, &g2)));
            let labeled = p.g1.labels().iter().any(|l| l.to_string() != "");
            assert_eq!(labeled, kind == CorpusKind::Labeled);
        }
    }
}

#[test]
fn inference_properties_on_bundled_corpora() {
    let r = runner();
    let programs = builtins();
    for kind in CorpusKind::ALL {
        let pairs = bundled_corpus(kind).unwrap();
        for matcher_kind in MatcherKind::ALL {
            let matcher = Matcher::new(matcher_kind);
            let report = infer(&programs, &pairs, &matcher, &r, Execution::Parallel, InferOptions { edit_paths: true }).unwrap();
            assert_eq!(report.errors, 0);
            assert!(report.rmse.is_some() && report.emr.is_some());
            for (pred, pair) in report.pairs.iter().zip(&pairs) {
                let value = pred.prediction.unwrap();
                assert!(value >= pair.true_ged.unwrap());
                let (g1, g2) = pad_to_equal_size(&pair.g1, &pair.g2);
                let mapping = pred.mapping.as_ref().unwrap();
                // Recomputed cost and replayed edit path both agree.
                assert_eq!(common::definition_cost(&g1, &g2, mapping.as_slice()), value);
                let ops = pred.edit_path.as_ref().unwrap();
                assert_eq!(ops.len() as u64, value);
                assert!(common::replay_reaches_target(&g1, &g2, mapping.as_slice(), ops));
                // The minimum is no larger than any single program's bound.
                let w0 = initial_weight_matrix(&g1, &g2);
                for p in &programs {
                    let ProgramKind::Builtin { builtin } = &p.kind else { unreachable!() };
                    let (single, _) = ged_upper_bound(&g1, &g2, &builtin.weights(&g1, &g2, &w0), &matcher).unwrap();
                    assert!(value <= single);
                }
            }
        }
    }
}

#[test]
fn zero_program_on_identical_graphs() {
    let g = Graph::new(["A", "B", "C", "D"], &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let pair = GraphPair { g1: g.clone(), g2: g.clone(), true_ged: Some(0) };
    let zero = vec![PriorityProgram::zero(ProgramId(0))];
    for kind in MatcherKind::ALL {
        let report = infer(&zero, std::slice::from_ref(&pair), &Matcher::new(kind), &runner(), Execution::Sequential, InferOptions::default()).unwrap();
        let pred = &report.pairs[0];
        // All weights tie, so the mapping is whatever the tie-break picks;
        // the prediction is exactly that mapping's cost.
        let mapping = pred.mapping.as_ref().unwrap();
        assert_eq!(pred.prediction, Some(common::definition_cost(&g, &g, mapping.as_slice())));
    }
}

#[test]
fn failing_programs_are_skipped_per_pair() {
    let r = runner();
    let broken = PriorityProgram::new(
        ProgramId(7),
        ProgramKind::script("exit 3\n", vec!["sh".into()]),
        0,
    );
    let pairs = bundled_corpus(CorpusKind::Sparse).unwrap()[..3].to_vec();
    let report = infer(&[broken.clone(), PriorityProgram::zero(ProgramId(1))], &pairs, &Matcher::default(), &r, Execution::Parallel, InferOptions::default()).unwrap();
    assert_eq!(report.errors, 0);
    assert!(report.pairs.iter().all(|p| p.failures.len() == 1 && p.program == Some(ProgramId(1))));
    let all_fail = infer(&[broken], &pairs, &Matcher::default(), &r, Execution::Parallel, InferOptions::default()).unwrap();
    assert_eq!(all_fail.errors, 3);
    assert!(all_fail.rmse.is_none());
    assert!(all_fail.pairs.iter().all(|p| p.prediction.is_none()));
}

#[test]
fn report_has_no_metrics_without_truths() {
    let mut pairs = bundled_corpus(CorpusKind::Dense).unwrap()[..4].to_vec();
    for p in &mut pairs {
        p.true_ged = None;
    }
    let report = infer(&builtins(), &pairs, &Matcher::default(), &runner(), Execution::Parallel, InferOptions::default()).unwrap();
    assert!(report.rmse.is_none() && report.emr.is_none());
    let json = serde_json::to_value(&report).unwrap();
    assert!(json.get("rmse").is_none());
}

#[test]
fn exact_truth_for_random_pairs_via_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..30 {
        let (a, b) = common::random_pair(&mut rng, 6);
        let (d, _) = exact_ged(&a, &b, 10).unwrap();
        let (pa, pb) = pad_to_equal_size(&a, &b);
        assert_eq!(d, common::brute_force_ged(&pa, &pb));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn loader_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g1, g2) = common::random_pair(&mut rng, 7);
        let record = PairRecord {
            g1: GraphFile::from_graph(&g1),
            g2: GraphFile::from_graph(&g2),
            true_ged: if seed % 2 == 0 { Some(seed % 11) } else { None },
        };
        let text = format_pairs(std::slice::from_ref(&record));
        let parsed = parse_pairs(&text).unwrap();
        prop_assert_eq!(&parsed[0], &record);
        prop_assert_eq!(format_pairs(&parsed), text);
        let pair = parsed[0].to_pair().unwrap();
        prop_assert_eq!(pair.g1, g1);
        prop_assert_eq!(pair.g2, g2);
    }
}
