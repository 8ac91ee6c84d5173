//! Islands-model program database.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::SeededRng;
use super::EvolutionError;
use crate::graph::GedValue;
use crate::program::{PriorityProgram, ProgramId};

pub const DEFAULT_ISLANDS: usize = 5;
pub const DEFAULT_CULL_PERIOD: usize = 100;
pub const DEFAULT_SAMPLING_TEMPERATURE: f64 = 0.99;
pub const DEFAULT_CONTEXT_SIZE: usize = 2;

/// One sub-population, members grouped into clusters of equal score.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Island {
    /// Score to member ids; ids kept sorted.
    clusters: BTreeMap<GedValue, Vec<ProgramId>>,
}

impl Island {
    pub fn clusters(&self) -> &BTreeMap<GedValue, Vec<ProgramId>> {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = ProgramId> + '_ {
        self.clusters.values().flatten().copied()
    }

    pub fn best_score(&self) -> Option<GedValue> {
        self.clusters.keys().next_back().copied()
    }

    fn insert(&mut self, score: GedValue, id: ProgramId) {
        let cluster = self.clusters.entry(score).or_default();
        let at = cluster.partition_point(|&m| m < id);
        cluster.insert(at, id);
    }
}

/// A registered program with its score and island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub program: PriorityProgram,
    pub score: GedValue,
    pub island: usize,
}

/// Scored program handed to the generator as context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextProgram {
    pub program: PriorityProgram,
    pub score: GedValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    islands: Vec<Island>,
    registry: BTreeMap<ProgramId, PoolEntry>,
    rng: SeededRng,
    registrations: usize,
    cull_period: usize,
    temperature: f64,
    culls: usize,
    next_id: u64,
}

impl Pool {
    pub fn new(islands: usize, cull_period: usize, temperature: f64, seed: u64) -> Result<Self, EvolutionError> {
        if islands == 0 {
            return Err(EvolutionError::Config("at least one island is required".into()));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(EvolutionError::Config(format!("sampling temperature must be positive, got {temperature}")));
        }
        Ok(Self {
            islands: vec![Island::default(); islands],
            registry: BTreeMap::new(),
            rng: SeededRng::new(seed),
            registrations: 0,
            cull_period,
            temperature,
            culls: 0,
            next_id: 0,
        })
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn len(&self) -> usize {
        self.registry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registry.is_empty()
    }

    pub fn get(&self, id: ProgramId) -> Option<&PoolEntry> {
        self.registry.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.registry.values()
    }

    pub fn registrations(&self) -> usize {
        self.registrations
    }

    pub fn culls(&self) -> usize {
        self.culls
    }

    /// Adds `program` to a uniformly random island and returns the island.
    /// Every `cull_period` registrations the weakest islands are culled.
    pub fn register(&mut self, program: PriorityProgram, score: GedValue) -> Result<usize, EvolutionError> {
        let island = self.rng.random_range(0..self.islands.len());
        self.place(program, score, island)?;
        self.registrations += 1;
        if self.cull_period > 0 && self.registrations.is_multiple_of(self.cull_period) {
            self.cull();
        }
        Ok(island)
    }

    /// Hands out program ids; the pool is the only allocator so copies made
    /// during culling never collide with programs held elsewhere.
    pub fn allocate_id(&mut self) -> ProgramId {
        let id = ProgramId(self.next_id);
        self.next_id += 1;
        id
    }

    fn place(&mut self, program: PriorityProgram, score: GedValue, island: usize) -> Result<(), EvolutionError> {
        let id = program.id;
        if self.registry.contains_key(&id) {
            return Err(EvolutionError::DuplicateProgram(id));
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.islands[island].insert(score, id);
        self.registry.insert(id, PoolEntry { program, score, island });
        Ok(())
    }

    /// Softmax over the island's cluster scores at the pool temperature, in
    /// ascending score order.
    pub fn cluster_probabilities(&self, island: usize) -> Vec<(GedValue, f64)> {
        softmax_clusters(self.islands[island].clusters.keys().copied(), self.temperature)
    }

    /// Shortest program in a cluster, ties to the lower id.
    fn representative(&self, cluster: &[ProgramId]) -> ProgramId {
        *cluster
            .iter()
            .min_by_key(|id| (self.registry[id].program.length, **id))
            .expect("clusters are never empty")
    }

    /// Picks a random non-empty island, then `k` clusters from the softmax
    /// over cluster scores (with replacement), taking each cluster's shortest
    /// program. Returned worst score first.
    pub fn sample_context(&mut self, k: usize) -> Result<Vec<ContextProgram>, EvolutionError> {
        let occupied: Vec<usize> = (0..self.islands.len()).filter(|&i| !self.islands[i].is_empty()).collect();
        if occupied.is_empty() {
            return Err(EvolutionError::EmptyPool);
        }
        let island = occupied[self.rng.random_range(0..occupied.len())];
        let probs = self.cluster_probabilities(island);
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k {
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut choice = probs.last().expect("island is non-empty").0;
            for &(score, p) in &probs {
                acc += p;
                if u < acc {
                    choice = score;
                    break;
                }
            }
            let id = self.representative(&self.islands[island].clusters[&choice]);
            let entry = &self.registry[&id];
            picked.push(ContextProgram {
                program: entry.program.clone(),
                score: entry.score,
            });
        }
        picked.sort_by_key(|c| (c.score, c.program.id));
        Ok(picked)
    }

    /// Best program of an island: top cluster, shortest, lowest id.
    pub fn best_of(&self, island: usize) -> Option<ProgramId> {
        let (_, top) = self.islands[island].clusters.iter().next_back()?;
        Some(self.representative(top))
    }

    /// Empties the `floor(s/2)` islands with the lowest best score (empty
    /// islands count lowest, ties to the lower island index) and reseeds each
    /// with a copy of a survivor's best program, cycling through survivors
    /// from best to worst. Copies get freshly allocated ids.
    /// Returns the culled island indices.
    pub fn cull(&mut self) -> Vec<usize> {
        let s = self.islands.len();
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by_key(|&i| (self.islands[i].best_score(), i));
        let (culled, survivors) = order.split_at(s / 2);
        let mut culled = culled.to_vec();
        culled.sort_unstable();
        let mut donors: Vec<usize> = survivors
            .iter()
            .copied()
            .filter(|&i| !self.islands[i].is_empty())
            .collect();
        donors.sort_by_key(|&i| (std::cmp::Reverse(self.islands[i].best_score()), i));

        for &i in &culled {
            let ids: Vec<ProgramId> = self.islands[i].members().collect();
            for id in ids {
                self.registry.remove(&id);
            }
            self.islands[i] = Island::default();
        }
        for (slot, &i) in culled.iter().enumerate() {
            let Some(&donor) = donors.get(slot % donors.len().max(1)) else {
                continue;
            };
            let best = self.best_of(donor).expect("donor islands are non-empty");
            let entry = &self.registry[&best];
            let mut copy = entry.program.clone();
            let score = entry.score;
            copy.id = self.allocate_id();
            self.place(copy, score, i).expect("fresh id");
        }
        self.culls += 1;
        culled
    }

}

/// Softmax of `scores / temperature`, shifted by the maximum for stability.
pub fn softmax_clusters(scores: impl IntoIterator<Item = GedValue>, temperature: f64) -> Vec<(GedValue, f64)> {
    let scores: Vec<GedValue> = scores.into_iter().collect();
    let Some(&max) = scores.iter().max() else {
        return Vec::new();
    };
    let logits: Vec<f64> = scores
        .iter()
        .map(|&s| ((s as f64 - max as f64) / temperature).exp())
        .collect();
    let total: f64 = logits.iter().sum();
    scores.into_iter().zip(logits).map(|(s, l)| (s, l / total)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{ProgramKind, PriorityProgram};

    fn program(id: u64, len: usize) -> PriorityProgram {
        let mut p = PriorityProgram::new(ProgramId(id), ProgramKind::python("x"), 0);
        p.length = len;
        p
    }

    fn pool() -> Pool {
        Pool::new(5, 0, 0.99, 7).unwrap()
    }

    #[test]
    fn first_registration() {
        let mut p = pool();
        let island = p.register(program(0, 1), 3).unwrap();
        assert!(island < 5);
        assert_eq!(p.islands()[island].clusters().len(), 1);
        assert!(matches!(p.register(program(0, 1), 3), Err(EvolutionError::DuplicateProgram(_))));
    }

    #[test]
    fn equal_scores_share_cluster() {
        let mut p = pool();
        p.place(program(1, 5), 4, 2).unwrap();
        p.place(program(2, 5), 4, 2).unwrap();
        assert_eq!(p.islands()[2].clusters()[&4], vec![ProgramId(1), ProgramId(2)]);
    }

    #[test]
    fn single_program_fills_context() {
        let mut p = pool();
        p.register(program(0, 10), 0).unwrap();
        let ctx = p.sample_context(2).unwrap();
        assert_eq!(ctx.len(), 2);
        assert!(ctx.iter().all(|c| c.program.id == ProgramId(0)));
        assert!(matches!(pool().sample_context(2), Err(EvolutionError::EmptyPool)));
    }

    #[test]
    fn shortest_then_lowest_id() {
        let mut p = pool();
        p.place(program(3, 120), 9, 0).unwrap();
        p.place(program(5, 80), 9, 0).unwrap();
        p.place(program(4, 80), 9, 0).unwrap();
        assert_eq!(p.best_of(0), Some(ProgramId(4)));
        let ctx = p.sample_context(2).unwrap();
        assert!(ctx.iter().all(|c| c.program.id == ProgramId(4)));
    }

    #[test]
    fn softmax_properties() {
        let probs = softmax_clusters([0, 1, 5, 40], 0.99);
        let total: f64 = probs.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let cold = softmax_clusters([0, 10], 1e-3);
        assert!(cold[1].1 > 1.0 - 1e-12);
        assert!(softmax_clusters([], 1.0).is_empty());
    }

    #[test]
    fn context_is_worst_first() {
        let mut p = Pool::new(1, 0, 50.0, 1).unwrap();
        for k in 0..6 {
            p.register(program(k, 1), k).unwrap();
        }
        for _ in 0..50 {
            let ctx = p.sample_context(2).unwrap();
            assert!(ctx[0].score <= ctx[1].score);
        }
    }

    #[test]
    fn cull_floor_half_and_reseed() {
        let mut p = pool();
        for (island, score) in [(0, 5), (1, 9), (2, 1), (3, 7), (4, 3)] {
            p.place(program(island as u64, 1), score, island).unwrap();
        }
        let culled = p.cull();
        assert_eq!(culled, vec![2, 4]);
        assert!(p.islands().iter().all(|i| !i.is_empty()));
        // Best survivor seeds the first culled island, next best the second.
        assert_eq!(p.islands()[2].best_score(), Some(9));
        assert_eq!(p.islands()[4].best_score(), Some(7));
        assert!(p.get(ProgramId(1)).is_some());
        assert_eq!(p.len(), 5);
        let total: usize = p.islands().iter().map(Island::len).sum();
        assert_eq!(total, p.len());
    }

    #[test]
    fn cull_ties_take_lowest_index() {
        let mut p = pool();
        for island in 0..5 {
            p.place(program(island as u64, 1), 4, island).unwrap();
        }
        assert_eq!(p.cull(), vec![0, 1]);
    }

    #[test]
    fn periodic_cull() {
        let mut p = Pool::new(5, 10, 0.99, 3).unwrap();
        for k in 0..25u64 {
            let id = p.allocate_id();
            p.register(program(id.0, 1), k % 4).unwrap();
        }
        assert_eq!(p.culls(), 2);
        let total: usize = p.islands().iter().map(Island::len).sum();
        assert_eq!(total, p.len());
    }
}
