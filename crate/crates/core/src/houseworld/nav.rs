use std::collections::VecDeque;

use super::{Cell, House, HouseError, SUCCESS_DWELL};
use crate::concepts::{ConceptId, SemanticVector};
use super::relations::GroundTruthRelations;

pub const UNREACHABLE: u32 = u32::MAX;

/// BFS distance from every cell to the nearest cell of each concept.
#[derive(Debug, Clone)]
pub struct ConceptDistances {
    fields: Vec<Option<Vec<u32>>>,
}

impl ConceptDistances {
    pub fn new(house: &House, concepts: usize) -> Self {
        let fields = (0..concepts)
            .map(|c| {
                let sources: Vec<usize> = house.concept_cells(ConceptId(c)).map(|cell| house.index(cell)).collect();
                (!sources.is_empty()).then(|| house.bfs_from(&sources))
            })
            .collect();
        Self { fields }
    }

    /// Distance field for `concept`, `None` if the house has no such room.
    pub fn field(&self, concept: ConceptId) -> Option<&[u32]> {
        self.fields.get(concept.index())?.as_deref()
    }

    pub fn distance(&self, house: &House, cell: Cell, concept: ConceptId) -> u32 {
        self.field(concept).map_or(UNREACHABLE, |f| f[house.index(cell)])
    }
}

/// Oracle episode length: BFS moves to the nearest target-room cell plus
/// the dwell steps needed by the success check.
pub fn shortest_path_len(house: &House, cell: Cell, target: ConceptId) -> Result<u32, HouseError> {
    let mut dist = vec![UNREACHABLE; house.cell_count()];
    let mut queue = VecDeque::new();
    let start = house.index(cell);
    dist[start] = 0;
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        let c = house.cell(i);
        if house.concept_at(c) == Some(target) {
            return Ok(dist[i] + (SUCCESS_DWELL as u32 - 1));
        }
        for (_, n) in house.neighbors(c) {
            let j = house.index(n);
            if dist[j] == UNREACHABLE {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    Err(HouseError::DisconnectedTarget)
}

/// Hop count of the shortest path from any active start concept to
/// `target` in the boolean relation graph; `None` when unreachable.
pub fn plan_distance(gt: &GroundTruthRelations, start: &SemanticVector, target: ConceptId) -> Option<usize> {
    let n = gt.nodes();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in start.active().filter(|s| s.index() < n) {
        dist[s.index()] = 0;
        queue.push_back(s.index());
    }
    while let Some(u) = queue.pop_front() {
        if u == target.index() {
            return Some(dist[u]);
        }
        for v in 0..n {
            if dist[v] == usize::MAX && gt.related(ConceptId(u), ConceptId(v)) {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    None
}
