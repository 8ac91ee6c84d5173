mod common;

use std::time::{Duration, Instant};

use ged_evolve::program::builtin::DegreeNeighborParams;
use ged_evolve::program::sandbox::WireRequest;
use ged_evolve::program::{
    evaluate_program, Builtin, ExecOutcome, ExternalRunner, PriorityProgram, ProgramId, ProgramKind,
    RunnerError, SandboxConfig,
};
use ged_evolve::{initial_weight_matrix, pad_to_equal_size, Execution, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn runner(limit_ms: u64) -> ExternalRunner {
    ExternalRunner::new(SandboxConfig {
        time_limit: Duration::from_millis(limit_ms),
        max_parallel: 16,
        ..SandboxConfig::default()
    })
    .unwrap()
}

fn sh(source: &str) -> PriorityProgram {
    PriorityProgram::new(ProgramId(1), ProgramKind::script(source, vec!["sh".into()]), 0)
}

fn pair() -> (Graph, Graph) {
    let a = Graph::new(["C", "N", "C"], &[(0, 1), (1, 2)]).unwrap();
    let b = Graph::new(["C", "C"], &[(0, 1)]).unwrap();
    pad_to_equal_size(&a, &b)
}

#[test]
fn python_renderings_match_builtins() {
    let r = runner(20_000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let builtins = [
        Builtin::Zero,
        Builtin::LabelPassthrough,
        Builtin::degree_neighbor(),
        Builtin::DegreeNeighbor(DegreeNeighborParams {
            label_weight: 1.375,
            degree_weight: 0.5,
            neighbor_weight: 2.25,
            degree_exponent: 1.5,
            neighbor_exponent: 0.75,
            jitter: 0.125,
            jitter_seed: u64::MAX - 17,
        }),
    ];
    for _ in 0..3 {
        let (g1, g2) = common::random_pair(&mut rng, 6);
        let (p1, p2) = pad_to_equal_size(&g1, &g2);
        let w0 = initial_weight_matrix(&p1, &p2);
        for b in &builtins {
            let native = b.weights(&p1, &p2, &w0);
            let ext = PriorityProgram::new(ProgramId(0), ProgramKind::python(b.python_source()), 0);
            let out = evaluate_program(&ext, &p1, &p2, &w0, &r).unwrap();
            let ExecOutcome::Ok(w) = out else {
                panic!("{} rendering failed: {out:?}", b.short_name())
            };
            for (x, y) in w.as_slice().iter().zip(native.as_slice()) {
                assert!((x - y).abs() <= 1e-12, "{}: {x} vs {y}", b.short_name());
            }
        }
    }
}

#[test]
fn spawn_failure_is_an_error() {
    let r = runner(1000);
    let (g1, g2) = pair();
    let w0 = initial_weight_matrix(&g1, &g2);
    let p = PriorityProgram::new(
        ProgramId(1),
        ProgramKind::script("", vec!["/nonexistent/interpreter".into()]),
        0,
    );
    assert!(matches!(
        evaluate_program(&p, &g1, &g2, &w0, &r),
        Err(RunnerError::Spawn { .. })
    ));
}

#[test]
fn request_reaches_program() {
    // Echo the label matrix back by reading the request with python.
    let r = runner(20_000);
    let (g1, g2) = pair();
    let w0 = initial_weight_matrix(&g1, &g2);
    let p = PriorityProgram::new(
        ProgramId(1),
        ProgramKind::python("def priority(graph1, graph2, weights):\n  return [[w + graph1[i][j] for j, w in enumerate(row)] for i, row in enumerate(weights)]\n"),
        0,
    );
    let ExecOutcome::Ok(w) = evaluate_program(&p, &g1, &g2, &w0, &r).unwrap() else {
        panic!("expected ok")
    };
    assert_eq!(w.get(0, 1), w0.get(0, 1) + 1.0);
    assert_eq!(w.get(0, 2), w0.get(0, 2));
}

#[test]
fn large_request_with_silent_program() {
    // Request bigger than a pipe buffer; the program never reads it.
    let r = runner(5000);
    let n = 120;
    let g = Graph::unlabeled(n, &[]).unwrap();
    let w0 = initial_weight_matrix(&g, &g);
    let adj = g.adjacency_matrix();
    let req = WireRequest {
        adj1: &adj,
        adj2: &adj,
        w0: &w0,
    };
    let report = r.run_script("exit 0\n", &["sh".into()], &req).unwrap();
    assert!(matches!(report.outcome, ExecOutcome::Malformed(ref m) if m.contains("empty")));
}

#[test]
fn many_forced_timeouts_leave_nothing_behind() {
    let r = runner(20);
    let (g1, g2) = pair();
    let w0 = initial_weight_matrix(&g1, &g2);
    let p = sh("while :; do :; done\n");
    let started = Instant::now();
    let outcomes = Execution::Parallel.map_range(1000, |_| {
        let adj1 = g1.adjacency_matrix();
        let adj2 = g2.adjacency_matrix();
        let req = WireRequest {
            adj1: &adj1,
            adj2: &adj2,
            w0: &w0,
        };
        let ProgramKind::External { source, command, .. } = &p.kind else {
            unreachable!()
        };
        r.run_script(source, command, &req).unwrap()
    });
    assert!(outcomes.iter().all(|o| o.outcome == ExecOutcome::Timeout));
    // Every direct child was reaped: its /proc entry is gone.
    for o in &outcomes {
        assert!(
            !std::path::Path::new(&format!("/proc/{}", o.pid)).exists()
                || common_proc_is_reused(o.pid),
            "pid {} still present",
            o.pid
        );
    }
    assert!(started.elapsed() < Duration::from_secs(120));
}

/// A pid can be recycled by an unrelated process; only our exact child
/// would still be in our process group with `sh` as its command.
fn common_proc_is_reused(pid: u32) -> bool {
    let Ok(stat) = std::fs::read_to_string(format!("/proc/{pid}/stat")) else {
        return true;
    };
    let own_pgid = std::fs::read_to_string("/proc/self/stat").unwrap();
    let field = |s: &str, k: usize| s.rsplit(')').next().unwrap().split_whitespace().nth(k).map(String::from);
    // Child groups are led by the child itself, never ours.
    field(&stat, 2) != Some(pid.to_string()) && field(&stat, 2) != field(&own_pgid, 2)
}

#[test]
fn concurrency_cap_respected() {
    let r = ExternalRunner::new(SandboxConfig {
        time_limit: Duration::from_secs(10),
        max_parallel: 2,
        ..SandboxConfig::default()
    })
    .unwrap();
    let (g1, g2) = pair();
    let w0 = initial_weight_matrix(&g1, &g2);
    let p = sh("sleep 0.3\nprintf '{\"weights\": [[0,0,0],[0,0,0],[0,0,0]]}'\n");
    let started = Instant::now();
    let outs = Execution::Parallel.map_range(4, |_| evaluate_program(&p, &g1, &g2, &w0, &r).unwrap());
    assert!(outs.iter().all(ExecOutcome::is_ok));
    // Four 0.3 s jobs through two slots take at least two rounds.
    if Execution::parallel_available() {
        assert!(started.elapsed() >= Duration::from_millis(590));
    }
}
