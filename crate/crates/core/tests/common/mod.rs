//! Test-only oracles, written independently of the library's search code.
#![allow(dead_code)]

use ged_evolve::{Graph, Label, WeightMatrix};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next_permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

/// Edit cost with the ordered-pair double sum halved, straight from the
/// definition.
pub fn definition_cost(g1: &Graph, g2: &Graph, pi: &[usize]) -> u64 {
    let n = pi.len();
    let nodes = (0..n).filter(|&v| g1.label(v) != g2.label(pi[v])).count() as u64;
    let mut ordered = 0u64;
    for u in 0..n {
        for v in 0..n {
            if u != v && g1.has_edge(u, v) != g2.has_edge(pi[u], pi[v]) {
                ordered += 1;
            }
        }
    }
    assert_eq!(ordered % 2, 0, "ordered edge mismatches must be even");
    nodes + ordered / 2
}

/// Brute-force distance over all permutations of padded graphs.
pub fn brute_force_ged(g1: &Graph, g2: &Graph) -> u64 {
    assert_eq!(g1.len(), g2.len());
    permutations(g1.len())
        .iter()
        .map(|p| definition_cost(g1, g2, p))
        .min()
        .unwrap()
}

pub fn brute_force_assignment(w: &WeightMatrix) -> f64 {
    permutations(w.rows())
        .iter()
        .map(|p| w.assignment_weight(p))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64, alphabet: &[&str]) -> Graph {
    let labels: Vec<&str> = (0..n)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(density) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(labels, &edges).unwrap()
}

/// Random pair of sizes in `1..=max_n`, labeled or unlabeled at random.
pub fn random_pair(rng: &mut impl Rng, max_n: usize) -> (Graph, Graph) {
    let alphabet: &[&str] = if rng.random_bool(0.5) {
        &["C", "N", "O"]
    } else {
        &[""]
    };
    let n1 = rng.random_range(1..=max_n);
    let n2 = rng.random_range(1..=max_n);
    let d1 = rng.random_range(0.1..0.8);
    let d2 = rng.random_range(0.1..0.8);
    (
        random_graph(rng, n1, d1, alphabet),
        random_graph(rng, n2, d2, alphabet),
    )
}

pub fn random_matrix(rng: &mut impl Rng, n: usize) -> WeightMatrix {
    // Mix of integer-valued (many ties) and continuous matrices.
    if rng.random_bool(0.3) {
        WeightMatrix::from_fn(n, n, |_, _| rng.random_range(0..4) as f64)
    } else {
        WeightMatrix::from_fn(n, n, |_, _| rng.random_range(-10.0..10.0))
    }
}

pub fn shuffled_copy(rng: &mut impl RngCore, g: &Graph) -> Graph {
    let n = g.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut labels = vec![String::new(); n];
    for v in 0..n {
        labels[perm[v]] = match g.label(v) {
            Label::Named(s) => s.clone(),
            Label::Dummy => unreachable!(),
        };
    }
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    Graph::new(labels, &edges).unwrap()
}

/// Random bound table: values never exceed the per-pair ceiling.
pub fn random_table(rng: &mut impl Rng, programs: usize, pairs: usize) -> ged_evolve::selection::BoundTable {
    use ged_evolve::program::ProgramId;
    let sizes: Vec<usize> = (0..pairs).map(|_| rng.random_range(1..=6)).collect();
    let mut t = ged_evolve::selection::BoundTable::new(sizes.clone());
    for k in 0..programs {
        let row = sizes
            .iter()
            .map(|&n| rng.random_range(0..=(n * n + n) as u64))
            .collect();
        t.insert(ProgramId(k as u64), row).unwrap();
    }
    t
}

/// Objective from scratch: per-pair minimum over the set, ceiling if empty.
pub fn oracle_objective(table: &ged_evolve::selection::BoundTable, set: &[ged_evolve::program::ProgramId]) -> u64 {
    let ceilings = table.ceilings();
    (0..ceilings.len())
        .map(|t| {
            set.iter()
                .map(|&p| table.row(p).unwrap()[t])
                .fold(ceilings[t], u64::min)
        })
        .sum()
}

/// Lowest objective over every subset of at most `b` programs.
pub fn exhaustive_best(table: &ged_evolve::selection::BoundTable, b: usize) -> u64 {
    let ids: Vec<_> = table.ids().collect();
    let m = ids.len();
    let mut best = u64::MAX;
    for mask in 0u64..(1u64 << m) {
        if mask.count_ones() as usize > b {
            continue;
        }
        let set: Vec<_> = (0..m).filter(|k| mask >> k & 1 == 1).map(|k| ids[k]).collect();
        best = best.min(oracle_objective(table, &set));
    }
    best
}

/// Replays `ops` on `g1` (padded) and checks that the result is `g2` under
/// `pi`, label for label and edge for edge.
pub fn replay_reaches_target(g1: &Graph, g2: &Graph, pi: &[usize], ops: &[ged_evolve::EditOp]) -> bool {
    use ged_evolve::EditOp;
    use std::collections::BTreeSet;
    let n = g1.len();
    let mut labels: Vec<String> = (0..n).map(|v| g1.label(v).to_string()).collect();
    let mut edges: BTreeSet<(usize, usize)> = g1.edges().iter().copied().collect();
    let inverse: Vec<usize> = {
        let mut inv = vec![0; n];
        for (u, &t) in pi.iter().enumerate() {
            inv[t] = u;
        }
        inv
    };
    for op in ops {
        match op {
            EditOp::SubstituteNode { node, to, .. } => labels[*node] = to.clone(),
            EditOp::InsertNode { target, label } => labels[inverse[*target]] = label.clone(),
            EditOp::DeleteNode { node, .. } => labels[*node] = "ε".into(),
            EditOp::InsertEdge { between } => {
                if !edges.insert(*between) {
                    return false;
                }
            }
            EditOp::DeleteEdge { between } => {
                if !edges.remove(between) {
                    return false;
                }
            }
        }
    }
    (0..n).all(|u| labels[u] == g2.label(pi[u]).to_string())
        && (0..n).all(|u| (u + 1..n).all(|v| edges.contains(&(u, v)) == g2.has_edge(pi[u], pi[v])))
}
