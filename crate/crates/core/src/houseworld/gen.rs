//! Binary-space-partition house generator.
//!
//! The grid is split into rectangular rooms, a random spanning tree of the
//! room adjacency graph gets one door per edge, and remaining adjacent pairs
//! get a door with probability `p_extra_door`. Room types are then assigned
//! in BFS order from an affinity table, so that some type pairs are
//! systematically neighbours across houses.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cell, House, HouseError, Room};
use crate::concepts::{ConceptId, ConceptVocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HouseParams {
    pub width: usize,
    pub height: usize,
    pub min_room: usize,
    /// Rooms beyond one per concept, drawn uniformly in `0..=max_extra_rooms`.
    pub max_extra_rooms: usize,
    pub p_extra_door: f64,
    pub vocabulary: ConceptVocabulary,
}

impl Default for HouseParams {
    fn default() -> Self {
        Self {
            width: 36,
            height: 24,
            min_room: 5,
            max_extra_rooms: 3,
            p_extra_door: 0.1,
            vocabulary: ConceptVocabulary::rooms(),
        }
    }
}

/// Type-pair affinities and per-type base frequencies.
#[derive(Debug, Clone)]
pub struct AffinityTable {
    base: Vec<f64>,
    affinity: Vec<Vec<f64>>,
    repeat_penalty: f64,
}

impl AffinityTable {
    /// Known room-type pairs get hand-set affinities; any other name pair is
    /// neutral.
    pub fn for_vocabulary(vocab: &ConceptVocabulary) -> Self {
        const BASE: &[(&str, f64)] = &[
            ("kitchen", 1.0),
            ("living room", 1.2),
            ("dining room", 0.9),
            ("bedroom", 1.5),
            ("bathroom", 1.2),
            ("office", 0.8),
            ("garage", 0.7),
            ("outdoor", 0.8),
        ];
        const PAIRS: &[(&str, &str, f64)] = &[
            ("kitchen", "dining room", 22.6),
            ("dining room", "living room", 11.2),
            ("living room", "outdoor", 11.2),
            ("garage", "outdoor", 22.6),
            ("bedroom", "bathroom", 22.6),
            ("living room", "office", 5.2),
            ("kitchen", "garage", 2.8),
            ("living room", "bedroom", 2.8),
            ("kitchen", "living room", 2.8),
            ("bathroom", "outdoor", 0.03),
            ("bathroom", "garage", 0.03),
            ("bedroom", "garage", 0.03),
            ("kitchen", "bathroom", 0.09),
            ("bedroom", "outdoor", 0.09),
            ("dining room", "bathroom", 0.09),
            ("office", "garage", 0.16),
            ("dining room", "garage", 0.16),
            ("kitchen", "bedroom", 0.16),
        ];
        let names = vocab.names();
        let k = names.len();
        let base = names
            .iter()
            .map(|n| BASE.iter().find(|(b, _)| b == n).map_or(1.0, |(_, w)| *w))
            .collect();
        let mut affinity = vec![vec![1.0; k]; k];
        for &(a, b, w) in PAIRS {
            if let (Some(i), Some(j)) = (names.iter().position(|n| n == a), names.iter().position(|n| n == b)) {
                affinity[i][j] = w;
                affinity[j][i] = w;
            }
        }
        Self { base, affinity, repeat_penalty: 0.3 }
    }

    fn weights(&self, neighbours: &[usize], used: &[usize]) -> Vec<f64> {
        (0..self.base.len())
            .map(|c| {
                let mut w = self.base[c] * self.repeat_penalty.powi(used[c] as i32);
                for &n in neighbours {
                    w *= self.affinity[c][n];
                }
                w
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
}

impl Rect {
    fn area(&self) -> usize {
        self.w * self.h
    }
}

/// Doorway candidates between two rectangles that share an edge.
fn shared_boundary(a: &Rect, b: &Rect) -> Vec<(Cell, Cell)> {
    let mut out = Vec::new();
    let overlap = |a0: usize, a1: usize, b0: usize, b1: usize| a0.max(b0)..a1.min(b1);
    if a.x + a.w == b.x || b.x + b.w == a.x {
        let (l, r) = if a.x + a.w == b.x { (a, b) } else { (b, a) };
        for y in overlap(a.y, a.y + a.h, b.y, b.y + b.h) {
            out.push((Cell::new(l.x + l.w - 1, y), Cell::new(r.x, y)));
        }
    } else if a.y + a.h == b.y || b.y + b.h == a.y {
        let (t, d) = if a.y + a.h == b.y { (a, b) } else { (b, a) };
        for x in overlap(a.x, a.x + a.w, b.x, b.x + b.w) {
            out.push((Cell::new(x, t.y + t.h - 1), Cell::new(x, d.y)));
        }
    }
    out
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Generates a house; a pure function of `(seed, params)`.
pub fn generate_house(seed: u64, params: &HouseParams) -> Result<House, HouseError> {
    let k = params.vocabulary.len();
    let min = params.min_room;
    if min == 0 || params.width < 3 * min || params.height < 3 * min {
        return Err(HouseError::DegenerateLayout(format!(
            "{}x{} grid cannot hold rooms of side {}",
            params.width, params.height, min
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_rooms = k + rng.gen_range(0..=params.max_extra_rooms);

    let mut leaves = vec![Rect { x: 0, y: 0, w: params.width, h: params.height }];
    while leaves.len() < target_rooms {
        let candidate = leaves
            .iter()
            .enumerate()
            .filter(|(_, r)| r.w >= 2 * min || r.h >= 2 * min)
            .max_by_key(|(i, r)| (r.area(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i);
        let Some(i) = candidate else { break };
        let r = leaves.swap_remove(i);
        let split_x = match (r.w >= 2 * min, r.h >= 2 * min) {
            (true, true) if r.w == r.h => rng.gen_bool(0.5),
            (true, true) => r.w > r.h,
            (can_x, _) => can_x,
        };
        if split_x {
            let at = rng.gen_range(min..=r.w - min);
            leaves.push(Rect { w: at, ..r });
            leaves.push(Rect { x: r.x + at, w: r.w - at, ..r });
        } else {
            let at = rng.gen_range(min..=r.h - min);
            leaves.push(Rect { h: at, ..r });
            leaves.push(Rect { y: r.y + at, h: r.h - at, ..r });
        }
    }
    if leaves.len() < k {
        return Err(HouseError::DegenerateLayout(format!("only {} rooms fit, need {}", leaves.len(), k)));
    }
    leaves.sort_by_key(|r| (r.y, r.x));
    let n = leaves.len();

    // Room adjacency with doorway candidates, in deterministic order.
    let mut adjacent = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let cand = shared_boundary(&leaves[a], &leaves[b]);
            if !cand.is_empty() {
                adjacent.push((a, b, cand));
            }
        }
    }
    adjacent.shuffle(&mut rng);
    let mut parent: Vec<usize> = (0..n).collect();
    let mut doors = Vec::new();
    let mut door_graph = vec![Vec::new(); n];
    for (a, b, cand) in &adjacent {
        let (ra, rb) = (find(&mut parent, *a), find(&mut parent, *b));
        let tree_edge = ra != rb;
        if tree_edge {
            parent[ra] = rb;
        }
        if tree_edge || rng.gen_bool(params.p_extra_door) {
            doors.push(cand[rng.gen_range(0..cand.len())]);
            door_graph[*a].push(*b);
            door_graph[*b].push(*a);
        }
    }

    // Type assignment in BFS order over the door graph.
    let table = AffinityTable::for_vocabulary(&params.vocabulary);
    let mut concept: Vec<Option<usize>> = vec![None; n];
    let mut used = vec![0usize; k];
    let mut queue = VecDeque::from([rng.gen_range(0..n)]);
    let mut queued = vec![false; n];
    queued[queue[0]] = true;
    while let Some(r) = queue.pop_front() {
        let neighbours: Vec<usize> = door_graph[r].iter().filter_map(|&m| concept[m]).collect();
        let weights = table.weights(&neighbours, &used);
        let total: f64 = weights.iter().sum();
        let mut pick = rng.gen::<f64>() * total;
        let mut c = k - 1;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                c = i;
                break;
            }
            pick -= w;
        }
        concept[r] = Some(c);
        used[c] += 1;
        let mut next = door_graph[r].clone();
        next.sort_unstable();
        for m in next {
            if !queued[m] {
                queued[m] = true;
                queue.push_back(m);
            }
        }
    }

    let rooms = leaves
        .iter()
        .enumerate()
        .map(|(id, r)| Room {
            id,
            concept: ConceptId(concept[id].expect("door graph spans all rooms")),
            cells: (r.y..r.y + r.h).flat_map(|y| (r.x..r.x + r.w).map(move |x| Cell::new(x, y))).collect(),
        })
        .collect();
    House::new(params.width, params.height, rooms, doors)
}
