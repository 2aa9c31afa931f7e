use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Action, House};
use crate::concepts::ConceptId;
use crate::graph::{pair_count, pair_index, pairs, RelationSamples};

/// Random-exploration length per sample.
pub const DEFAULT_BUDGET: usize = 300;
/// Samples per relation per house.
pub const DEFAULT_TRIALS: usize = 50;

/// True close-by relations of one house over `K + 1` nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRelations {
    nodes: usize,
    adjacency: Vec<Vec<bool>>,
}

impl GroundTruthRelations {
    pub fn empty(nodes: usize) -> Self {
        Self { nodes, adjacency: vec![vec![false; nodes]; nodes] }
    }

    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut gt = Self::empty(nodes);
        for &(i, j) in edges {
            gt.set(i, j);
        }
        gt
    }

    fn set(&mut self, i: usize, j: usize) {
        if i != j {
            self.adjacency[i][j] = true;
            self.adjacency[j][i] = true;
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn related(&self, i: ConceptId, j: ConceptId) -> bool {
        self.adjacency[i.index()][j.index()]
    }

    pub fn matrix(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        pairs(self.nodes).filter(|&(i, j)| self.adjacency[i][j]).count()
    }
}

/// Per-pair reachability hits from seeded random explorations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reachability {
    nodes: usize,
    trials: usize,
    hits: Vec<u64>,
}

impl Reachability {
    /// Trials (out of `trials`) in which the pair was found close-by.
    pub fn hits(&self, i: usize, j: usize) -> u64 {
        self.hits[pair_index(self.nodes, i, j)]
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// A relation holds when at least one trial connected the pair.
    pub fn relations(&self) -> GroundTruthRelations {
        let mut gt = GroundTruthRelations::empty(self.nodes);
        for (i, j) in pairs(self.nodes) {
            if self.hits(i, j) > 0 {
                gt.set(i, j);
            }
        }
        gt
    }

    /// Every trial is one Bernoulli sample of `z` for every pair.
    pub fn samples(&self) -> RelationSamples {
        let mut s = RelationSamples::new(self.nodes);
        for (i, j) in pairs(self.nodes) {
            s.add_counts(i, j, self.hits(i, j), self.trials as u64);
        }
        s
    }
}

/// Runs `trials` random walks of `budget` steps from uniformly chosen cells
/// of every concept present in the house. Trial `t` counts the pair `{i, j}`
/// as close-by if walk `t` from an `i` room visits a `j` room or walk `t`
/// from a `j` room visits an `i` room. Absent concepts (and the unknown
/// node) never start walks and are never reached.
pub fn sample_reachability(house: &House, concepts: usize, budget: usize, trials: usize, seed: u64) -> Reachability {
    assert!(budget >= 1 && trials >= 1, "budget and trials must be positive");
    let nodes = concepts + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // reached[i][t]: concept mask visited by walk t started in concept i.
    let mut reached = vec![vec![0u64; trials]; nodes];
    for (i, walks) in reached.iter_mut().enumerate().take(concepts) {
        let starts: Vec<_> = house.concept_cells(ConceptId(i)).collect();
        if starts.is_empty() {
            continue;
        }
        for mask in walks.iter_mut() {
            let mut cell = starts[rng.gen_range(0..starts.len())];
            for _ in 0..budget {
                cell = house.try_move(cell, Action::random(&mut rng));
                if let Some(c) = house.concept_at(cell) {
                    *mask |= 1 << c.index();
                }
            }
        }
    }
    let mut hits = vec![0u64; pair_count(nodes)];
    for (i, j) in pairs(nodes) {
        hits[pair_index(nodes, i, j)] = (0..trials)
            .filter(|&t| reached[i][t] & (1 << j) != 0 || reached[j][t] & (1 << i) != 0)
            .count() as u64;
    }
    Reachability { nodes, trials, hits }
}

pub fn ground_truth_relations(house: &House, concepts: usize, budget: usize, trials: usize, seed: u64) -> GroundTruthRelations {
    sample_reachability(house, concepts, budget, trials, seed).relations()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::houseworld::tests::two_rooms;

    #[test]
    fn adjacent_rooms_are_related() {
        let h = two_rooms(true).unwrap();
        let gt = ground_truth_relations(&h, 3, DEFAULT_BUDGET, DEFAULT_TRIALS, 7);
        assert!(gt.related(ConceptId(0), ConceptId(1)));
        assert!(gt.related(ConceptId(1), ConceptId(0)));
        // Concept 2 and the unknown node (3) are absent.
        for k in 0..4 {
            assert!(!gt.related(ConceptId(2), ConceptId(k)));
            assert!(!gt.related(ConceptId(3), ConceptId(k)));
        }
        assert_eq!(gt.edge_count(), 1);
    }

    #[test]
    fn sampling_is_deterministic_and_symmetric() {
        let h = two_rooms(true).unwrap();
        let a = sample_reachability(&h, 3, 20, 10, 3);
        let b = sample_reachability(&h, 3, 20, 10, 3);
        assert_eq!(a, b);
        let gt = a.relations();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(gt.matrix()[i][j], gt.matrix()[j][i]);
            }
            assert!(!gt.matrix()[i][i]);
        }
        let s = a.samples();
        assert_eq!(s.counts(0, 1).1, 10);
        assert_eq!(s.counts(2, 3), (0, 10));
    }
}
