//! Exact graph edit distance for small graphs.
//!
//! Both search modes walk mappings in lexicographic order and only accept
//! strict improvements, so the returned mapping is the lexicographically
//! smallest optimum either way.

use std::collections::HashMap;

use crate::graph::{pad_to_equal_size, GedValue, Graph, GraphError, Label, NodeMapping};

pub const DEFAULT_NODE_LIMIT: usize = 10;

/// Up to this size the oracle enumerates all `n!` mappings without pruning.
pub const ENUMERATION_LIMIT: usize = 8;

/// Minimum edit cost over all node mappings, with the lexicographically
/// smallest optimal mapping. Inputs are padded internally.
pub fn exact_ged(
    g1: &Graph,
    g2: &Graph,
    node_limit: usize,
) -> Result<(GedValue, NodeMapping), GraphError> {
    let nodes = g1.len().max(g2.len());
    if nodes > node_limit {
        return Err(GraphError::TooLarge {
            nodes,
            limit: node_limit,
        });
    }
    let (p1, p2) = pad_to_equal_size(g1, g2);
    Ok(if nodes <= ENUMERATION_LIMIT {
        Search::new(&p1, &p2, false).run()
    } else {
        Search::new(&p1, &p2, true).run()
    })
}

/// Full enumeration regardless of size. Exposed as an independent oracle.
pub fn enumerate_ged(g1: &Graph, g2: &Graph) -> (GedValue, NodeMapping) {
    let (p1, p2) = pad_to_equal_size(g1, g2);
    Search::new(&p1, &p2, false).run()
}

/// Depth-first branch and bound regardless of size.
pub fn branch_and_bound_ged(g1: &Graph, g2: &Graph) -> (GedValue, NodeMapping) {
    let (p1, p2) = pad_to_equal_size(g1, g2);
    Search::new(&p1, &p2, true).run()
}

struct Search<'a> {
    g1: &'a Graph,
    g2: &'a Graph,
    n: usize,
    prune: bool,
    labels1: Vec<usize>,
    labels2: Vec<usize>,
    remaining1: Vec<usize>,
    remaining2: Vec<usize>,
    assignment: Vec<usize>,
    used: Vec<bool>,
    best: GedValue,
    best_assignment: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(g1: &'a Graph, g2: &'a Graph, prune: bool) -> Self {
        let n = g1.len();
        let mut ids: HashMap<&Label, usize> = HashMap::new();
        let mut intern = |l: &'a Label| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        };
        let labels1: Vec<usize> = g1.labels().iter().map(&mut intern).collect();
        let labels2: Vec<usize> = g2.labels().iter().map(&mut intern).collect();
        let k = ids.len();
        let mut remaining1 = vec![0; k];
        let mut remaining2 = vec![0; k];
        labels1.iter().for_each(|&l| remaining1[l] += 1);
        labels2.iter().for_each(|&l| remaining2[l] += 1);
        Self {
            g1,
            g2,
            n,
            prune,
            labels1,
            labels2,
            remaining1,
            remaining2,
            assignment: vec![usize::MAX; n],
            used: vec![false; n],
            best: GedValue::MAX,
            best_assignment: (0..n).collect(),
        }
    }

    fn run(mut self) -> (GedValue, NodeMapping) {
        if self.n == 0 {
            return (0, NodeMapping::identity(0));
        }
        if self.prune {
            // Seed with the identity cost; +1 keeps equal-cost branches alive
            // so the lexicographic tie-break is unaffected.
            let identity: Vec<usize> = (0..self.n).collect();
            self.best = crate::graph::mapping_cost(self.g1, self.g2, &identity) + 1;
        }
        self.descend(0, 0);
        let mapping = NodeMapping::new(self.best_assignment).expect("search yields a permutation");
        (self.best, mapping)
    }

    /// Nodes of the first graph that cannot find a same-label partner among
    /// the unassigned nodes of the second. Each costs at least one edit.
    fn label_deficit(&self) -> GedValue {
        self.remaining1
            .iter()
            .zip(&self.remaining2)
            .map(|(&a, &b)| a.saturating_sub(b) as GedValue)
            .sum()
    }

    fn descend(&mut self, u: usize, cost: GedValue) {
        if u == self.n {
            if cost < self.best {
                self.best = cost;
                self.best_assignment.copy_from_slice(&self.assignment);
            }
            return;
        }
        for t in 0..self.n {
            if self.used[t] {
                continue;
            }
            let mut delta = GedValue::from(self.labels1[u] != self.labels2[t]);
            for v in 0..u {
                if self.g1.has_edge(u, v) != self.g2.has_edge(t, self.assignment[v]) {
                    delta += 1;
                }
            }
            let next = cost + delta;
            self.remaining1[self.labels1[u]] -= 1;
            self.remaining2[self.labels2[t]] -= 1;
            if !self.prune || next + self.label_deficit() < self.best {
                self.used[t] = true;
                self.assignment[u] = t;
                self.descend(u + 1, next);
                self.used[t] = false;
            }
            self.remaining1[self.labels1[u]] += 1;
            self.remaining2[self.labels2[t]] += 1;
        }
    }
}
