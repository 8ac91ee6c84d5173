//! Weight matrix to node mapping: maximum-weight bipartite matching and two
//! cheaper heuristics, plus the per-program edit-distance upper bound.
//!
//! All matchers break ties toward the smaller `(row, col)` pair.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{mapping_cost, GedValue, Graph, GraphError, NodeMapping};
use crate::matrix::{MatrixError, WeightMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatcherKind {
    Hungarian,
    Greedy,
    #[default]
    NeighborBiased,
}

impl MatcherKind {
    pub const ALL: [MatcherKind; 3] = [
        MatcherKind::Hungarian,
        MatcherKind::Greedy,
        MatcherKind::NeighborBiased,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MatcherKind::Hungarian => "hungarian",
            MatcherKind::Greedy => "greedy",
            MatcherKind::NeighborBiased => "neighbor_biased",
        }
    }
}

impl fmt::Display for MatcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatcherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hungarian" => Ok(MatcherKind::Hungarian),
            "greedy" => Ok(MatcherKind::Greedy),
            "neighbor_biased" | "neighbor-biased" => Ok(MatcherKind::NeighborBiased),
            other => Err(format!(
                "unknown matcher `{other}` (expected hungarian, greedy or neighbor_biased)"
            )),
        }
    }
}

pub const DEFAULT_NEIGHBOR_BIAS: f64 = 1.0;

/// A matcher kind with its tuning. `neighbor_bias` only affects
/// [`MatcherKind::NeighborBiased`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matcher {
    pub kind: MatcherKind,
    #[serde(default = "default_bias")]
    pub neighbor_bias: f64,
}

fn default_bias() -> f64 {
    DEFAULT_NEIGHBOR_BIAS
}

impl Default for Matcher {
    fn default() -> Self {
        Self::new(MatcherKind::default())
    }
}

impl From<MatcherKind> for Matcher {
    fn from(kind: MatcherKind) -> Self {
        Self::new(kind)
    }
}

impl Matcher {
    pub fn new(kind: MatcherKind) -> Self {
        Self {
            kind,
            neighbor_bias: DEFAULT_NEIGHBOR_BIAS,
        }
    }

    pub fn assign(&self, w: &WeightMatrix, g1: &Graph, g2: &Graph) -> Result<NodeMapping, MatchError> {
        match self.kind {
            MatcherKind::Hungarian => hungarian_match(w),
            MatcherKind::Greedy => greedy_match(w),
            MatcherKind::NeighborBiased => neighbor_biased_match(w, g1, g2, self.neighbor_bias),
        }
    }
}

fn validate(w: &WeightMatrix) -> Result<(), MatchError> {
    w.check_square()?;
    w.check_finite()?;
    Ok(())
}

/// Optimal assignment maximizing `sum_i w[i, pi(i)]`, O(n^3).
///
/// Runs the shortest-augmenting-path form of the Hungarian method on
/// `max(w) - w`. Among equally short candidate columns an unassigned one is
/// preferred, then the lowest index, so that e.g. a constant matrix yields
/// the identity.
pub fn hungarian_match(w: &WeightMatrix) -> Result<NodeMapping, MatchError> {
    validate(w)?;
    let n = w.rows();
    if n == 0 {
        return Ok(NodeMapping::identity(0));
    }
    let top = w.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cost = |i: usize, j: usize| top - w.get(i - 1, j - 1);

    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta || (minv[j] == delta && owner[j] == 0 && owner[j1] != 0) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut forward = vec![0; n];
    for j in 1..=n {
        forward[owner[j] - 1] = j - 1;
    }
    Ok(NodeMapping::new(forward)?)
}

/// Repeatedly takes the largest remaining entry whose row and column are
/// both free.
pub fn greedy_match(w: &WeightMatrix) -> Result<NodeMapping, MatchError> {
    validate(w)?;
    let n = w.rows();
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    cells.sort_by(|&(a, b), &(c, d)| w.get(c, d).total_cmp(&w.get(a, b)).then((a, b).cmp(&(c, d))));
    let mut forward = vec![usize::MAX; n];
    let mut col_taken = vec![false; n];
    let mut left = n;
    for (i, j) in cells {
        if left == 0 {
            break;
        }
        if forward[i] == usize::MAX && !col_taken[j] {
            forward[i] = j;
            col_taken[j] = true;
            left -= 1;
        }
    }
    Ok(NodeMapping::new(forward)?)
}

/// Best-first matching that favors pairs adjacent to already matched pairs.
///
/// Each step picks the free pair `(i, j)` maximizing
/// `w[i, j] + bias * |{(i', j') matched : i' ~ i in g1 and j' ~ j in g2}|`.
/// The first step therefore takes the heaviest entry.
pub fn neighbor_biased_match(
    w: &WeightMatrix,
    g1: &Graph,
    g2: &Graph,
    bias: f64,
) -> Result<NodeMapping, MatchError> {
    validate(w)?;
    let n = w.rows();
    if g1.len() != n || g2.len() != n {
        return Err(MatrixError::Dimension {
            expected_rows: g1.len(),
            expected_cols: g2.len(),
            rows: n,
            cols: n,
        }
        .into());
    }
    let mut support = vec![0u32; n * n];
    let mut forward = vec![usize::MAX; n];
    let mut col_taken = vec![false; n];
    for _ in 0..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| forward[i] == usize::MAX) {
            for j in (0..n).filter(|&j| !col_taken[j]) {
                let score = w.get(i, j) + bias * f64::from(support[i * n + j]);
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("a free pair remains while rows are unmatched");
        forward[i] = j;
        col_taken[j] = true;
        for a in g1.neighbors(i) {
            if forward[a] != usize::MAX {
                continue;
            }
            for b in g2.neighbors(j) {
                if !col_taken[b] {
                    support[a * n + b] += 1;
                }
            }
        }
    }
    Ok(NodeMapping::new(forward)?)
}

/// Edit cost of the mapping `matcher` derives from `w`; an upper bound on the
/// exact distance between the (padded) graphs.
pub fn ged_upper_bound(
    g1: &Graph,
    g2: &Graph,
    w: &WeightMatrix,
    matcher: &Matcher,
) -> Result<(GedValue, NodeMapping), MatchError> {
    if g1.len() != g2.len() {
        return Err(GraphError::SizeMismatch(g1.len(), g2.len()).into());
    }
    w.check_shape(g1.len(), g2.len())?;
    let pi = matcher.assign(w, g1, g2)?;
    let cost = mapping_cost(g1, g2, pi.as_slice());
    Ok((cost, pi))
}
