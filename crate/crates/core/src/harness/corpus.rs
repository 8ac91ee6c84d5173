//! Seeded toy corpora with exact distances.
//!
//! Each pair is a random graph and a randomly edited, shuffled copy, so
//! distances stay small and structure is shared, as in real similarity
//! search workloads. Three flavours: molecule-like labeled graphs, dense
//! unlabeled graphs and sparse unlabeled graphs. Truths come from the exact
//! solver.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{parse_pairs, GraphPair, PairRecord};
use super::HarnessError;
use crate::exact::{exact_ged, DEFAULT_NODE_LIMIT};
use crate::graph::Graph;

pub const CORPUS_PAIRS: usize = 50;
pub const CORPUS_SEED: u64 = 20_240_601;
pub const MIN_NODES: usize = 3;
pub const MAX_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Labeled,
    Dense,
    Sparse,
}

impl CorpusKind {
    pub const ALL: [CorpusKind; 3] = [CorpusKind::Labeled, CorpusKind::Dense, CorpusKind::Sparse];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusKind::Labeled => "labeled",
            CorpusKind::Dense => "dense",
            CorpusKind::Sparse => "sparse",
        }
    }

    /// The bundled JSON-lines file for this kind.
    pub fn bundled_text(self) -> &'static str {
        match self {
            CorpusKind::Labeled => include_str!("../../data/labeled.jsonl"),
            CorpusKind::Dense => include_str!("../../data/dense.jsonl"),
            CorpusKind::Sparse => include_str!("../../data/sparse.jsonl"),
        }
    }

    fn seed_offset(self) -> u64 {
        match self {
            CorpusKind::Labeled => 0,
            CorpusKind::Dense => 1,
            CorpusKind::Sparse => 2,
        }
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CorpusKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown corpus {s:?}; expected labeled, dense or sparse"))
    }
}

/// Atom-like alphabet, weighted towards carbon.
const ATOMS: [&str; 11] = ["C", "C", "C", "C", "C", "C", "N", "N", "O", "O", "S"];

struct Draft {
    labels: Vec<String>,
    edges: Vec<(usize, usize)>,
}

impl Draft {
    fn has(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    fn add(&mut self, u: usize, v: usize) -> bool {
        if u == v || self.has(u, v) {
            return false;
        }
        self.edges.push((u.min(v), u.max(v)));
        true
    }

    fn build(&self) -> Graph {
        Graph::new(self.labels.iter().cloned(), &self.edges).expect("drafts are valid")
    }
}

fn label(kind: CorpusKind, rng: &mut ChaCha8Rng) -> String {
    match kind {
        CorpusKind::Labeled => ATOMS[rng.random_range(0..ATOMS.len())].to_string(),
        _ => String::new(),
    }
}

fn base_graph(kind: CorpusKind, rng: &mut ChaCha8Rng) -> Draft {
    let n = rng.random_range(MIN_NODES..=MAX_NODES);
    let mut d = Draft {
        labels: (0..n).map(|_| label(kind, rng)).collect(),
        edges: Vec::new(),
    };
    match kind {
        CorpusKind::Labeled => {
            // A tree with a ring closure now and then.
            for v in 1..n {
                let u = rng.random_range(0..v);
                d.add(u, v);
            }
            for _ in 0..rng.random_range(0..=1) {
                let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
                d.add(u, v);
            }
        }
        CorpusKind::Dense | CorpusKind::Sparse => {
            let p = if kind == CorpusKind::Dense { 0.6 } else { 0.25 };
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random_bool(p) {
                        d.add(u, v);
                    }
                }
            }
        }
    }
    d
}

fn edit(kind: CorpusKind, d: &mut Draft, rng: &mut ChaCha8Rng) {
    let n = d.labels.len();
    match rng.random_range(0..5) {
        0 if kind == CorpusKind::Labeled => {
            let v = rng.random_range(0..n);
            d.labels[v] = label(kind, rng);
        }
        1 | 0 => {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            d.add(u, v);
        }
        2 if !d.edges.is_empty() => {
            let k = rng.random_range(0..d.edges.len());
            d.edges.remove(k);
        }
        3 if n < MAX_NODES => {
            d.labels.push(label(kind, rng));
            let u = rng.random_range(0..n);
            d.add(u, n);
        }
        4 if n > MIN_NODES - 1 => {
            let v = rng.random_range(0..n);
            d.labels.remove(v);
            d.edges.retain(|&(a, b)| a != v && b != v);
            for e in &mut d.edges {
                e.0 -= (e.0 > v) as usize;
                e.1 -= (e.1 > v) as usize;
            }
        }
        _ => {}
    }
}

fn shuffled(d: &Draft, rng: &mut ChaCha8Rng) -> Draft {
    let n = d.labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![String::new(); n];
    for (old, &new) in order.iter().enumerate() {
        labels[new] = d.labels[old].clone();
    }
    Draft {
        labels,
        edges: d.edges.iter().map(|&(u, v)| (order[u].min(order[v]), order[u].max(order[v]))).collect(),
    }
}

/// Generates `pairs` pairs of the given kind with exact distances.
pub fn generate_corpus(kind: CorpusKind, seed: u64, pairs: usize) -> Vec<GraphPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(kind.seed_offset()));
    (0..pairs)
        .map(|_| {
            let base = base_graph(kind, &mut rng);
            let mut other = Draft {
                labels: base.labels.clone(),
                edges: base.edges.clone(),
            };
            for _ in 0..rng.random_range(1..=4) {
                edit(kind, &mut other, &mut rng);
            }
            let other = shuffled(&other, &mut rng);
            let (g1, g2) = (base.build(), other.build());
            let (truth, _) = exact_ged(&g1, &g2, DEFAULT_NODE_LIMIT).expect("corpus graphs are small");
            GraphPair {
                g1,
                g2,
                true_ged: Some(truth),
            }
        })
        .collect()
}

pub fn generate_records(kind: CorpusKind, seed: u64, pairs: usize) -> Vec<PairRecord> {
    generate_corpus(kind, seed, pairs).iter().map(PairRecord::from_pair).collect()
}

/// The bundled corpus of this kind.
pub fn bundled_corpus(kind: CorpusKind) -> Result<Vec<GraphPair>, HarnessError> {
    parse_pairs(kind.bundled_text())?.iter().map(PairRecord::to_pair).collect()
}
