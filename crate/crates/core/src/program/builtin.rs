//! In-process priority programs, each with an equivalent Python rendering
//! that follows the external program contract.

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::matrix::WeightMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Builtin {
    /// All-zero weights; the seed of every search.
    Zero,
    /// Returns the label-agreement matrix unchanged.
    LabelPassthrough,
    /// Label agreement blended with degree and neighborhood similarity.
    DegreeNeighbor(DegreeNeighborParams),
}

impl Builtin {
    pub fn degree_neighbor() -> Self {
        Builtin::DegreeNeighbor(DegreeNeighborParams::default())
    }

    pub fn weights(&self, g1: &Graph, g2: &Graph, w0: &WeightMatrix) -> WeightMatrix {
        match self {
            Builtin::Zero => builtin_zero(g1, g2, w0),
            Builtin::LabelPassthrough => builtin_label_passthrough(g1, g2, w0),
            Builtin::DegreeNeighbor(p) => degree_neighbor_with(g1, g2, w0, p),
        }
    }

    /// Python `priority(graph1, graph2, weights)` computing the same matrix.
    pub fn python_source(&self) -> String {
        match self {
            Builtin::Zero => ZERO_SOURCE.to_string(),
            Builtin::LabelPassthrough => PASSTHROUGH_SOURCE.to_string(),
            Builtin::DegreeNeighbor(p) => p.python_source(),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Builtin::Zero => "zero",
            Builtin::LabelPassthrough => "label_passthrough",
            Builtin::DegreeNeighbor(_) => "degree_neighbor",
        }
    }
}

const ZERO_SOURCE: &str = "def priority(graph1, graph2, weights):
  n = len(weights)
  return [[0.0] * n for _ in range(n)]
";

const PASSTHROUGH_SOURCE: &str = "def priority(graph1, graph2, weights):
  return [list(row) for row in weights]
";

pub fn builtin_zero(_g1: &Graph, _g2: &Graph, w0: &WeightMatrix) -> WeightMatrix {
    WeightMatrix::zeros(w0.rows(), w0.cols())
}

pub fn builtin_label_passthrough(_g1: &Graph, _g2: &Graph, w0: &WeightMatrix) -> WeightMatrix {
    w0.clone()
}

/// The reference degree/neighbor heuristic (default parameters).
pub fn builtin_degree_neighbor(g1: &Graph, g2: &Graph, w0: &WeightMatrix) -> WeightMatrix {
    degree_neighbor_with(g1, g2, w0, &DegreeNeighborParams::default())
}

/// Coefficients of the degree/neighbor family:
///
/// ```text
/// ds    = (1 - |deg i - deg j| / max(1, deg i, deg j)) ^ degree_exponent
/// nterm = nsim * (min(deg i, deg j) / max(1, deg i, deg j)) ^ neighbor_exponent
/// W     = (a * w0 * (1 + c * ds) + d * nterm) / (a + d + c * ds) + jitter * u(i, j)
/// ```
///
/// with `a = label_weight`, `c = degree_weight`, `d = neighbor_weight`,
/// `nsim` the mean `w0` over neighbor pairs (1 if both nodes are isolated, 0
/// if exactly one is) and `u` a fixed hash of `(jitter_seed, i, j)` in
/// `[0, 1)`. The defaults give `(2 w0 (1 + ds) + nterm) / (3 + ds)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeNeighborParams {
    pub label_weight: f64,
    pub degree_weight: f64,
    pub neighbor_weight: f64,
    pub degree_exponent: f64,
    pub neighbor_exponent: f64,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub jitter_seed: u64,
}

impl Default for DegreeNeighborParams {
    fn default() -> Self {
        Self {
            label_weight: 2.0,
            degree_weight: 1.0,
            neighbor_weight: 1.0,
            degree_exponent: 1.0,
            neighbor_exponent: 1.0,
            jitter: 0.0,
            jitter_seed: 0,
        }
    }
}

/// splitmix64 finalizer over `(seed, i, j)`, scaled to `[0, 1)`.
pub(crate) fn pair_noise(seed: u64, i: usize, j: usize) -> f64 {
    let mut z = seed
        ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

pub fn degree_neighbor_with(
    g1: &Graph,
    g2: &Graph,
    w0: &WeightMatrix,
    p: &DegreeNeighborParams,
) -> WeightMatrix {
    let nbrs1: Vec<Vec<usize>> = (0..g1.len()).map(|v| g1.neighbors(v).collect()).collect();
    let nbrs2: Vec<Vec<usize>> = (0..g2.len()).map(|v| g2.neighbors(v).collect()).collect();
    WeightMatrix::from_fn(g1.len(), g2.len(), |i, j| {
        let (ni, nj) = (&nbrs1[i], &nbrs2[j]);
        let (di, dj) = (ni.len() as f64, nj.len() as f64);
        let max_degree = di.max(dj).max(1.0);
        let mut degree_sim = 1.0 - (di - dj).abs() / max_degree;
        if p.degree_exponent != 1.0 {
            degree_sim = degree_sim.powf(p.degree_exponent);
        }
        let neighbor_sim = match (ni.is_empty(), nj.is_empty()) {
            (false, false) => {
                let mut total = 0.0;
                for &a in ni {
                    for &b in nj {
                        total += w0.get(a, b);
                    }
                }
                total / (ni.len() * nj.len()) as f64
            }
            (true, true) => 1.0,
            _ => 0.0,
        };
        let mut ratio = di.min(dj) / max_degree;
        if p.neighbor_exponent != 1.0 {
            ratio = ratio.powf(p.neighbor_exponent);
        }
        let neighbor_term = neighbor_sim * ratio;
        let mut value = (p.label_weight * w0.get(i, j) * (1.0 + p.degree_weight * degree_sim)
            + p.neighbor_weight * neighbor_term)
            / (p.label_weight + p.neighbor_weight + p.degree_weight * degree_sim);
        if p.jitter != 0.0 {
            value += p.jitter * pair_noise(p.jitter_seed, i, j);
        }
        value
    })
}

impl DegreeNeighborParams {
    pub fn python_source(&self) -> String {
        let mut s = String::from(
            "def priority(graph1, graph2, weights):
  n1 = len(graph1)
  n2 = len(graph2)
  refined = [[0.0] * n2 for _ in range(n1)]
  for i in range(n1):
    neighbors_i = [k for k in range(n1) if graph1[i][k]]
    for j in range(n2):
      neighbors_j = [l for l in range(n2) if graph2[j][l]]
      degree_i = float(len(neighbors_i))
      degree_j = float(len(neighbors_j))
      max_degree = max(1.0, degree_i, degree_j)
      degree_similarity = 1.0 - abs(degree_i - degree_j) / max_degree
",
        );
        if self.degree_exponent != 1.0 {
            s += &format!(
                "      degree_similarity = degree_similarity ** {:?}\n",
                self.degree_exponent
            );
        }
        s += "      if neighbors_i and neighbors_j:
        total = 0.0
        for a in neighbors_i:
          for b in neighbors_j:
            total += weights[a][b]
        neighbor_similarity = total / float(len(neighbors_i) * len(neighbors_j))
      elif not neighbors_i and not neighbors_j:
        neighbor_similarity = 1.0
      else:
        neighbor_similarity = 0.0
      ratio = min(degree_i, degree_j) / max_degree
";
        if self.neighbor_exponent != 1.0 {
            s += &format!("      ratio = ratio ** {:?}\n", self.neighbor_exponent);
        }
        s += &format!(
            "      refined[i][j] = ({a:?} * weights[i][j] * (1.0 + {c:?} * degree_similarity) + {d:?} * (neighbor_similarity * ratio)) / ({a:?} + {d:?} + {c:?} * degree_similarity)\n",
            a = self.label_weight,
            c = self.degree_weight,
            d = self.neighbor_weight,
        );
        if self.jitter != 0.0 {
            s += &format!(
                "      refined[i][j] += {:?} * _noise({}, i, j)\n",
                self.jitter, self.jitter_seed
            );
        }
        s += "  return refined\n";
        if self.jitter != 0.0 {
            s += NOISE_SOURCE;
        }
        s
    }
}

const NOISE_SOURCE: &str = "
def _noise(seed, i, j):
  m = (1 << 64) - 1
  z = seed ^ ((i * 0x9E3779B97F4A7C15) & m) ^ ((j * 0xC2B2AE3D27D4EB4F) & m)
  z = (z + 0x9E3779B97F4A7C15) & m
  z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & m
  z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & m
  z ^= z >> 31
  return (z >> 11) / float(1 << 53)
";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{initial_weight_matrix, pad_to_equal_size};
    use crate::matching::{ged_upper_bound, MatcherKind};

    #[test]
    fn zero_shapes() {
        for n in [1, 3] {
            let g = Graph::unlabeled(n, &[]).unwrap();
            let w0 = initial_weight_matrix(&g, &g);
            let z = builtin_zero(&g, &g, &w0);
            assert_eq!(z, WeightMatrix::zeros(n, n));
        }
    }

    #[test]
    fn passthrough_returns_input() {
        let g = Graph::new(["A", "B"], &[]).unwrap();
        let w0 = initial_weight_matrix(&g, &g);
        let once = builtin_label_passthrough(&g, &g, &w0);
        assert_eq!(once, w0);
        assert_eq!(builtin_label_passthrough(&g, &g, &once), w0);
        let zeros = WeightMatrix::zeros(2, 2);
        assert_eq!(builtin_label_passthrough(&g, &g, &zeros), zeros);
    }

    #[test]
    fn isolated_same_label_pair() {
        // degsim = 1, neighbor similarity 1 scaled by min/max degree = 0/1:
        // (2 * 1 * 2 + 0) / 4.
        let g = Graph::new(["C"], &[]).unwrap();
        let w = builtin_degree_neighbor(&g, &g, &initial_weight_matrix(&g, &g));
        assert_eq!(w.get(0, 0), 1.0);
    }

    #[test]
    fn star_center_prefers_center() {
        let star = Graph::unlabeled(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let w = builtin_degree_neighbor(&star, &star, &initial_weight_matrix(&star, &star));
        // center-center: (2 * 2 + 1) / 4; center-leaf: (2 * 4/3 + 1/3) / (10/3).
        assert!((w.get(0, 0) - 1.25).abs() < 1e-12);
        assert!((w.get(0, 1) - 0.9).abs() < 1e-12);
        assert!(w.get(0, 0) > w.get(0, 1));
    }

    #[test]
    fn unique_labels_recover_identity() {
        let g = Graph::new(["A", "B", "C", "D", "E"], &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        let w = builtin_degree_neighbor(&g, &g, &initial_weight_matrix(&g, &g));
        let (d, _) = ged_upper_bound(&g, &g, &w, &MatcherKind::Hungarian.into()).unwrap();
        assert_eq!(d, 0);
    }

    #[test]
    fn deterministic_bits() {
        let a = Graph::new(["C", "N", "C"], &[(0, 1), (1, 2)]).unwrap();
        let b = Graph::new(["C", "C"], &[(0, 1)]).unwrap();
        let (pa, pb) = pad_to_equal_size(&a, &b);
        let w0 = initial_weight_matrix(&pa, &pb);
        let params = DegreeNeighborParams {
            degree_exponent: 1.7,
            jitter: 0.05,
            jitter_seed: 99,
            ..Default::default()
        };
        let x = degree_neighbor_with(&pa, &pb, &w0, &params);
        let y = degree_neighbor_with(&pa, &pb, &w0, &params);
        let bits = |m: &WeightMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
        x.check_finite().unwrap();
    }

    #[test]
    fn noise_in_unit_interval() {
        for i in 0..20 {
            for j in 0..20 {
                let u = pair_noise(12345, i, j);
                assert!((0.0..1.0).contains(&u));
            }
        }
        assert_ne!(pair_noise(1, 0, 1), pair_noise(1, 1, 0));
    }

    #[test]
    fn renderings_mention_only_non_default_terms() {
        let plain = Builtin::degree_neighbor().python_source();
        assert!(!plain.contains("**"));
        assert!(!plain.contains("_noise"));
        let tuned = DegreeNeighborParams {
            neighbor_exponent: 2.5,
            jitter: 0.01,
            ..Default::default()
        }
        .python_source();
        assert!(tuned.contains("ratio ** 2.5"));
        assert!(tuned.contains("def _noise"));
    }
}
