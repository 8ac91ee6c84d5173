//! Labeled undirected graphs, dummy-node padding and the edit cost induced by
//! a node mapping.
//!
//! A mapping `pi` between two graphs of equal size `n` costs
//!
//! ```text
//! sum_v [L1(v) != L2(pi(v))]  +  sum_{u < v} [e1(u, v) != e2(pi(u), pi(v))]
//! ```
//!
//! Counting each unordered pair once is the same as halving the ordered-pair
//! sum. Graphs of different size are first padded with isolated dummy nodes
//! carrying the reserved label `ε`; mapping a real node onto a dummy is a
//! deletion, the reverse an insertion.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::WeightMatrix;

/// Textual spelling of the dummy label. Input graphs may not use it.
pub const EPSILON: &str = "ε";

pub type GedValue = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("node {0} uses the reserved dummy label")]
    ReservedLabel(usize),
    #[error("graphs have different sizes ({0} vs {1}); pad them first")]
    SizeMismatch(usize, usize),
    #[error("invalid node mapping: {0}")]
    InvalidMapping(String),
    #[error("graph with {nodes} nodes exceeds the exact-search limit of {limit}")]
    TooLarge { nodes: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Padding node label `ε`.
    Dummy,
    Named(String),
}

impl Label {
    pub fn is_dummy(&self) -> bool {
        matches!(self, Label::Dummy)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Dummy => f.write_str(EPSILON),
            Label::Named(s) => f.write_str(s),
        }
    }
}

/// Undirected simple graph on dense node ids `0..n`. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    labels: Vec<Label>,
    adjacency: Vec<bool>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new<L, I>(labels: I, edges: &[(usize, usize)]) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = L>,
        L: Into<String>,
    {
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let l = l.into();
                if l == EPSILON {
                    Err(GraphError::ReservedLabel(i))
                } else {
                    Ok(Label::Named(l))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(labels, edges)
    }

    /// Graph whose nodes all share one label.
    pub fn unlabeled(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        Self::new(std::iter::repeat_n("", n), edges)
    }

    fn from_parts(labels: Vec<Label>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let n = labels.len();
        let mut adjacency = vec![false; n * n];
        let mut list = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::EdgeOutOfRange(u, v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if adjacency[u * n + v] {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            adjacency[u * n + v] = true;
            adjacency[v * n + u] = true;
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        Ok(Self {
            labels,
            adjacency,
            edges: list,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn label(&self, v: usize) -> &Label {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u * self.len() + v]
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        self.adjacency[v * n..(v + 1) * n]
            .iter()
            .enumerate()
            .filter_map(|(u, &e)| e.then_some(u))
    }

    pub fn degree(&self, v: usize) -> usize {
        let n = self.len();
        self.adjacency[v * n..(v + 1) * n].iter().filter(|&&e| e).count()
    }

    pub fn dummy_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_dummy()).count()
    }

    /// 0/1 adjacency rows, the form handed to external programs.
    pub fn adjacency_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        (0..n)
            .map(|u| (0..n).map(|v| u8::from(self.has_edge(u, v))).collect())
            .collect()
    }

    fn padded(&self, n: usize) -> Self {
        if n <= self.len() {
            return self.clone();
        }
        let mut labels = self.labels.clone();
        labels.resize(n, Label::Dummy);
        Self::from_parts(labels, &self.edges).expect("padding keeps edges valid")
    }
}

/// Extends the smaller graph with isolated `ε` nodes appended after its
/// existing ids. The larger graph is returned unchanged.
pub fn pad_to_equal_size(g1: &Graph, g2: &Graph) -> (Graph, Graph) {
    let n = g1.len().max(g2.len());
    (g1.padded(n), g2.padded(n))
}

/// Bijection `i -> forward[i]` between two node sets of equal size.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct NodeMapping {
    forward: Vec<usize>,
}

impl NodeMapping {
    pub fn new(forward: Vec<usize>) -> Result<Self, GraphError> {
        let n = forward.len();
        let mut seen = vec![false; n];
        for (i, &j) in forward.iter().enumerate() {
            if j >= n {
                return Err(GraphError::InvalidMapping(format!(
                    "node {i} mapped to {j}, outside 0..{n}"
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(GraphError::InvalidMapping(format!(
                    "target {j} used more than once"
                )));
            }
        }
        Ok(Self { forward })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    #[inline]
    pub fn target(&self, i: usize) -> usize {
        self.forward[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &j) in self.forward.iter().enumerate() {
            inv[j] = i;
        }
        Self { forward: inv }
    }
}

impl TryFrom<Vec<usize>> for NodeMapping {
    type Error = GraphError;

    fn try_from(forward: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(forward)
    }
}

impl From<NodeMapping> for Vec<usize> {
    fn from(m: NodeMapping) -> Self {
        m.forward
    }
}

fn check_mapping(g1: &Graph, g2: &Graph, pi: &NodeMapping) -> Result<(), GraphError> {
    if g1.len() != g2.len() {
        return Err(GraphError::SizeMismatch(g1.len(), g2.len()));
    }
    if pi.len() != g1.len() {
        return Err(GraphError::InvalidMapping(format!(
            "mapping has {} entries for graphs of size {}",
            pi.len(),
            g1.len()
        )));
    }
    Ok(())
}

/// Edit cost of transforming `g1` into `g2` along the node mapping `pi`.
pub fn ged_under_mapping(g1: &Graph, g2: &Graph, pi: &NodeMapping) -> Result<GedValue, GraphError> {
    check_mapping(g1, g2, pi)?;
    Ok(mapping_cost(g1, g2, pi.as_slice()))
}

/// Unchecked cost; `forward` must be a permutation of `0..g1.len()`.
pub(crate) fn mapping_cost(g1: &Graph, g2: &Graph, forward: &[usize]) -> GedValue {
    let n = forward.len();
    let mut cost = 0;
    for u in 0..n {
        let pu = forward[u];
        if g1.label(u) != g2.label(pu) {
            cost += 1;
        }
        for (v, &pv) in forward.iter().enumerate().skip(u + 1) {
            if g1.has_edge(u, v) != g2.has_edge(pu, pv) {
                cost += 1;
            }
        }
    }
    cost
}

/// One elementary edit. Node ids refer to the padded graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    SubstituteNode {
        node: usize,
        target: usize,
        from: String,
        to: String,
    },
    InsertNode {
        target: usize,
        label: String,
    },
    DeleteNode {
        node: usize,
        label: String,
    },
    InsertEdge {
        /// Endpoints in the first graph's numbering.
        between: (usize, usize),
    },
    DeleteEdge {
        between: (usize, usize),
    },
}

/// The edit path a mapping induces. Its length always equals
/// [`ged_under_mapping`] for the same inputs.
pub fn edit_path(g1: &Graph, g2: &Graph, pi: &NodeMapping) -> Result<Vec<EditOp>, GraphError> {
    check_mapping(g1, g2, pi)?;
    let n = g1.len();
    let mut ops = Vec::new();
    for u in 0..n {
        let t = pi.target(u);
        match (g1.label(u), g2.label(t)) {
            (a, b) if a == b => {}
            (Label::Dummy, b) => ops.push(EditOp::InsertNode {
                target: t,
                label: b.to_string(),
            }),
            (a, Label::Dummy) => ops.push(EditOp::DeleteNode {
                node: u,
                label: a.to_string(),
            }),
            (a, b) => ops.push(EditOp::SubstituteNode {
                node: u,
                target: t,
                from: a.to_string(),
                to: b.to_string(),
            }),
        }
    }
    for u in 0..n {
        for v in u + 1..n {
            match (g1.has_edge(u, v), g2.has_edge(pi.target(u), pi.target(v))) {
                (true, false) => ops.push(EditOp::DeleteEdge { between: (u, v) }),
                (false, true) => ops.push(EditOp::InsertEdge { between: (u, v) }),
                _ => {}
            }
        }
    }
    Ok(ops)
}

/// `W0[i, j] = 1` when the labels agree (`ε` only agrees with `ε`), else 0.
pub fn initial_weight_matrix(g1: &Graph, g2: &Graph) -> WeightMatrix {
    WeightMatrix::from_fn(g1.len(), g2.len(), |i, j| {
        if g1.label(i) == g2.label(j) {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::unlabeled(3, &[(0, 1), (1, 2)]).unwrap()
    }

    fn triangle() -> Graph {
        Graph::unlabeled(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            Graph::unlabeled(2, &[(0, 2)]),
            Err(GraphError::EdgeOutOfRange(0, 2, 2))
        );
        assert_eq!(Graph::unlabeled(2, &[(1, 1)]), Err(GraphError::SelfLoop(1)));
        assert_eq!(
            Graph::unlabeled(2, &[(0, 1), (1, 0)]),
            Err(GraphError::DuplicateEdge(1, 0))
        );
        assert_eq!(
            Graph::new(["C", EPSILON], &[]),
            Err(GraphError::ReservedLabel(1))
        );
    }

    #[test]
    fn padding_equal_sizes_is_noop() {
        let a = Graph::new(["A", "B"], &[(0, 1)]).unwrap();
        let b = Graph::new(["A", "C"], &[]).unwrap();
        let (pa, pb) = pad_to_equal_size(&a, &b);
        assert_eq!(pa, a);
        assert_eq!(pb, b);
    }

    #[test]
    fn padding_appends_isolated_dummies() {
        let small = Graph::new(["A", "B"], &[(0, 1)]).unwrap();
        let big = Graph::new(["A", "B", "C"], &[(0, 1), (1, 2)]).unwrap();
        let (p1, p2) = pad_to_equal_size(&small, &big);
        assert_eq!(p2, big);
        assert_eq!(p1.len(), 3);
        assert_eq!(p1.label(2), &Label::Dummy);
        assert_eq!(p1.degree(2), 0);
        assert_eq!(p1.edges(), small.edges());

        let five = Graph::unlabeled(5, &[(0, 4)]).unwrap();
        let (q1, q2) = pad_to_equal_size(&five, &big);
        assert_eq!(q1, five);
        assert_eq!(q2.label(3), &Label::Dummy);
        assert_eq!(q2.label(4), &Label::Dummy);
        assert_eq!(q2.dummy_count(), 2);
    }

    #[test]
    fn mapping_validation() {
        assert!(NodeMapping::new(vec![1, 0, 2]).is_ok());
        assert!(NodeMapping::new(vec![1, 1, 2]).is_err());
        assert!(NodeMapping::new(vec![0, 3, 1]).is_err());
        let pi = NodeMapping::new(vec![2, 0, 1]).unwrap();
        assert_eq!(pi.inverse().as_slice(), &[1, 2, 0]);
    }

    #[test]
    fn identical_graphs_cost_zero() {
        let g = Graph::new(["C", "N", "O"], &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(ged_under_mapping(&g, &g, &NodeMapping::identity(3)), Ok(0));
    }

    #[test]
    fn path_to_triangle_one_insertion() {
        assert_eq!(
            ged_under_mapping(&path3(), &triangle(), &NodeMapping::identity(3)),
            Ok(1)
        );
    }

    #[test]
    fn padded_edge_to_triangle() {
        let edge = Graph::new(["C", "C"], &[(0, 1)]).unwrap();
        let tri = Graph::new(["C", "C", "C"], &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let (p1, p2) = pad_to_equal_size(&edge, &tri);
        assert_eq!(ged_under_mapping(&p1, &p2, &NodeMapping::identity(3)), Ok(3));
    }

    #[test]
    fn cost_rejects_bad_inputs() {
        let a = Graph::unlabeled(2, &[]).unwrap();
        let b = Graph::unlabeled(3, &[]).unwrap();
        assert_eq!(
            ged_under_mapping(&a, &b, &NodeMapping::identity(2)),
            Err(GraphError::SizeMismatch(2, 3))
        );
        assert!(matches!(
            ged_under_mapping(&b, &b, &NodeMapping::identity(2)),
            Err(GraphError::InvalidMapping(_))
        ));
    }

    #[test]
    fn edit_path_length_matches_cost() {
        let g1 = Graph::new(["C", "O"], &[(0, 1)]).unwrap();
        let g2 = Graph::new(["N", "C", "C"], &[(1, 2), (0, 2)]).unwrap();
        let (p1, p2) = pad_to_equal_size(&g1, &g2);
        for forward in [[0, 1, 2], [1, 2, 0], [2, 0, 1]] {
            let pi = NodeMapping::new(forward.to_vec()).unwrap();
            let ops = edit_path(&p1, &p2, &pi).unwrap();
            assert_eq!(ops.len() as u64, ged_under_mapping(&p1, &p2, &pi).unwrap());
        }
        let pi = NodeMapping::new(vec![1, 0, 2]).unwrap();
        let ops = edit_path(&p1, &p2, &pi).unwrap();
        assert!(ops.contains(&EditOp::SubstituteNode {
            node: 1,
            target: 0,
            from: "O".into(),
            to: "N".into()
        }));
        assert!(ops.contains(&EditOp::InsertNode {
            target: 2,
            label: "C".into()
        }));
    }

    #[test]
    fn initial_weights() {
        let ab = Graph::new(["A", "B"], &[]).unwrap();
        assert_eq!(
            initial_weight_matrix(&ab, &ab).to_rows(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        let u = Graph::unlabeled(2, &[(0, 1)]).unwrap();
        assert_eq!(
            initial_weight_matrix(&u, &u).to_rows(),
            vec![vec![1.0, 1.0], vec![1.0, 1.0]]
        );
        let a = Graph::new(["A"], &[]).unwrap();
        let bb = Graph::new(["B", "B"], &[]).unwrap();
        let (pa, pbb) = pad_to_equal_size(&a, &bb);
        assert_eq!(
            initial_weight_matrix(&pa, &pbb).to_rows(),
            vec![vec![0.0, 0.0], vec![0.0, 0.0]]
        );
        let (pa2, _) = pad_to_equal_size(&a, &bb);
        assert_eq!(initial_weight_matrix(&pa2, &pa2).get(1, 1), 1.0);
    }
}
