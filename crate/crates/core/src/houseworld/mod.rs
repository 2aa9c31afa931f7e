//! Grid houses made of rectangular rooms joined by doors.
//!
//! Movement is 4-connected plus "stay". A move is blocked by the grid edge,
//! by wall cells, and by room boundaries unless a door joins the two cells.

mod corpus;
mod detector;
mod gen;
mod nav;
mod relations;

pub use corpus::{CorpusManifest, CorpusSplit, HouseRecord, DEFAULT_TEST_HOUSES, DEFAULT_TRAIN_HOUSES, DEFAULT_VALID_HOUSES};
pub use detector::DetectorModel;
pub use gen::{generate_house, AffinityTable, HouseParams};
pub use nav::{plan_distance, shortest_path_len, ConceptDistances, UNREACHABLE};
pub use relations::{ground_truth_relations, sample_reachability, GroundTruthRelations, Reachability, DEFAULT_BUDGET, DEFAULT_TRIALS};

use std::collections::{HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::{ConceptId, ConfidenceVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HouseError {
    #[error("degenerate layout: {0}")]
    DegenerateLayout(String),
    #[error("invalid house: {0}")]
    Invalid(String),
    #[error("disconnected target")]
    DisconnectedTarget,
}

/// Grid coordinate; `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl From<[usize; 2]> for Cell {
    fn from([x, y]: [usize; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    fn bit(self) -> u8 {
        match self {
            Action::Up => 1,
            Action::Down => 2,
            Action::Left => 4,
            Action::Right => 8,
            Action::Stay => 0,
        }
    }

    pub fn random(rng: &mut impl Rng) -> Action {
        Action::ALL[rng.gen_range(0..Action::ALL.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: usize,
    pub concept: ConceptId,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct HouseFile {
    width: usize,
    height: usize,
    rooms: Vec<Room>,
    doors: Vec<(Cell, Cell)>,
}

/// An immutable house layout with precomputed passability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct House {
    width: usize,
    height: usize,
    rooms: Vec<Room>,
    doors: Vec<(Cell, Cell)>,
    /// Index into `rooms` for every cell, `None` for walls.
    room_of: Vec<Option<usize>>,
    /// Bitmask of allowed moves per cell.
    moves: Vec<u8>,
}

impl House {
    /// Validates and indexes a layout. Cells not covered by any room are walls.
    pub fn new(width: usize, height: usize, rooms: Vec<Room>, doors: Vec<(Cell, Cell)>) -> Result<Self, HouseError> {
        let invalid = |m: String| Err(HouseError::Invalid(m));
        if width == 0 || height == 0 {
            return invalid("empty grid".into());
        }
        if rooms.is_empty() {
            return invalid("house has no rooms".into());
        }
        let mut room_of = vec![None; width * height];
        let mut ids = HashSet::new();
        for (r, room) in rooms.iter().enumerate() {
            if !ids.insert(room.id) {
                return invalid(format!("duplicate room id {}", room.id));
            }
            if room.cells.is_empty() {
                return invalid(format!("room {} has no cells", room.id));
            }
            for &c in &room.cells {
                if c.x >= width || c.y >= height {
                    return invalid(format!("room {} cell {:?} outside the grid", room.id, c));
                }
                let slot = &mut room_of[c.y * width + c.x];
                if slot.is_some() {
                    return invalid(format!("cell {:?} belongs to two rooms", c));
                }
                *slot = Some(r);
            }
        }
        let mut door_set = HashSet::new();
        for &(a, b) in &doors {
            if a.manhattan(b) != 1 {
                return invalid(format!("door {:?}-{:?} joins non-adjacent cells", a, b));
            }
            let (ra, rb) = match (room_at(&room_of, width, height, a), room_at(&room_of, width, height, b)) {
                (Some(ra), Some(rb)) => (ra, rb),
                _ => return invalid(format!("door {:?}-{:?} touches a wall", a, b)),
            };
            if ra == rb {
                return invalid(format!("door {:?}-{:?} does not cross a room boundary", a, b));
            }
            door_set.insert((a, b));
            door_set.insert((b, a));
        }

        let mut moves = vec![0u8; width * height];
        for y in 0..height {
            for x in 0..width {
                let here = Cell::new(x, y);
                let Some(r) = room_of[y * width + x] else { continue };
                for action in Action::MOVES {
                    let Some(next) = offset(here, action, width, height) else { continue };
                    let open = match room_of[next.y * width + next.x] {
                        Some(rn) if rn == r => true,
                        Some(_) => door_set.contains(&(here, next)),
                        None => false,
                    };
                    if open {
                        moves[y * width + x] |= action.bit();
                    }
                }
            }
        }

        let house = Self { width, height, rooms, doors, room_of, moves };
        if !house.rooms_connected() {
            return invalid("room graph is not connected".into());
        }
        Ok(house)
    }

    fn rooms_connected(&self) -> bool {
        let start = self.rooms[0].cells[0];
        let dist = self.bfs_from(&[self.index(start)]);
        dist.iter().zip(&self.room_of).all(|(&d, r)| r.is_none() || d != u32::MAX)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn rooms(&self) -> &[Room] {
        &self.rooms
    }

    pub fn doors(&self) -> &[(Cell, Cell)] {
        &self.doors
    }

    #[inline]
    pub fn index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    #[inline]
    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn is_open(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.room_of[self.index(c)].is_some()
    }

    pub fn room_at(&self, c: Cell) -> Option<&Room> {
        room_at(&self.room_of, self.width, self.height, c).map(|r| &self.rooms[r])
    }

    pub fn concept_at(&self, c: Cell) -> Option<ConceptId> {
        self.room_at(c).map(|r| r.concept)
    }

    pub fn has_concept(&self, concept: ConceptId) -> bool {
        self.rooms.iter().any(|r| r.concept == concept)
    }

    /// All open cells, row-major.
    pub fn open_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).filter(|&i| self.room_of[i].is_some()).map(|i| self.cell(i))
    }

    pub fn concept_cells(&self, concept: ConceptId) -> impl Iterator<Item = Cell> + '_ {
        self.rooms.iter().filter(move |r| r.concept == concept).flat_map(|r| r.cells.iter().copied())
    }

    #[inline]
    pub fn can_move(&self, c: Cell, action: Action) -> bool {
        action == Action::Stay || self.moves[self.index(c)] & action.bit() != 0
    }

    /// Result of taking `action` at `c`; blocked moves leave the agent in place.
    #[inline]
    pub fn try_move(&self, c: Cell, action: Action) -> Cell {
        if action != Action::Stay && self.can_move(c, action) {
            offset(c, action, self.width, self.height).expect("open move stays on the grid")
        } else {
            c
        }
    }

    /// Cells reachable in one move (excluding staying put).
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = (Action, Cell)> + '_ {
        Action::MOVES
            .into_iter()
            .filter(move |&a| self.can_move(c, a))
            .map(move |a| (a, self.try_move(c, a)))
    }

    /// Multi-source BFS distance in moves; `u32::MAX` marks unreachable cells.
    pub fn bfs_from(&self, sources: &[usize]) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.cell_count()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] == u32::MAX {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(i) = queue.pop_front() {
            let c = self.cell(i);
            for (_, n) in self.neighbors(c) {
                let j = self.index(n);
                if dist[j] == u32::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Room-level adjacency through doors, indexed like [`House::rooms`].
    pub fn room_graph(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.rooms.len()];
        for &(a, b) in &self.doors {
            let ra = self.room_of[self.index(a)].unwrap();
            let rb = self.room_of[self.index(b)].unwrap();
            if !adj[ra].contains(&rb) {
                adj[ra].push(rb);
                adj[rb].push(ra);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn to_json(&self) -> String {
        let file = HouseFile {
            width: self.width,
            height: self.height,
            rooms: self.rooms.clone(),
            doors: self.doors.clone(),
        };
        let mut s = serde_json::to_string(&file).expect("house serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, HouseError> {
        let file: HouseFile = serde_json::from_str(s).map_err(|e| HouseError::Invalid(e.to_string()))?;
        Self::new(file.width, file.height, file.rooms, file.doors)
    }
}

fn room_at(room_of: &[Option<usize>], width: usize, height: usize, c: Cell) -> Option<usize> {
    if c.x < width && c.y < height {
        room_of[c.y * width + c.x]
    } else {
        None
    }
}

fn offset(c: Cell, action: Action, width: usize, height: usize) -> Option<Cell> {
    let (x, y) = (c.x, c.y);
    match action {
        Action::Up if y > 0 => Some(Cell::new(x, y - 1)),
        Action::Down if y + 1 < height => Some(Cell::new(x, y + 1)),
        Action::Left if x > 0 => Some(Cell::new(x - 1, y)),
        Action::Right if x + 1 < width => Some(Cell::new(x + 1, y)),
        Action::Stay => Some(c),
        _ => None,
    }
}

/// Moves the agent and emits the detector reading at the new position.
pub fn step(
    house: &House,
    detector: &DetectorModel,
    concepts: usize,
    cell: Cell,
    action: Action,
    rng: &mut impl Rng,
) -> (Cell, ConfidenceVector) {
    let next = house.try_move(cell, action);
    let reading = detector.emit(house.concept_at(next), concepts, rng);
    (next, reading)
}

/// Number of trailing positions that must lie in a target room.
pub const SUCCESS_DWELL: usize = 3;

/// True when the last three positions are all inside rooms of `target`.
pub fn success_check(house: &House, trajectory: &[Cell], target: ConceptId) -> bool {
    trajectory.len() >= SUCCESS_DWELL
        && trajectory[trajectory.len() - SUCCESS_DWELL..]
            .iter()
            .all(|&c| house.concept_at(c) == Some(target))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A 1×(n+1) strip: `n` cells of concept 0, then one cell of concept 1,
    /// joined by a door.
    pub fn strip(n: usize) -> House {
        let a = Room { id: 0, concept: ConceptId(0), cells: (0..n).map(|x| Cell::new(x, 0)).collect() };
        let b = Room { id: 1, concept: ConceptId(1), cells: vec![Cell::new(n, 0)] };
        House::new(n + 1, 1, vec![a, b], vec![(Cell::new(n - 1, 0), Cell::new(n, 0))]).unwrap()
    }

    /// Two 2×2 rooms side by side with a single door on the top row.
    pub fn two_rooms(door: bool) -> Result<House, HouseError> {
        let left = Room { id: 0, concept: ConceptId(0), cells: vec![Cell::new(0, 0), Cell::new(1, 0), Cell::new(0, 1), Cell::new(1, 1)] };
        let right = Room { id: 1, concept: ConceptId(1), cells: vec![Cell::new(2, 0), Cell::new(3, 0), Cell::new(2, 1), Cell::new(3, 1)] };
        let doors = if door { vec![(Cell::new(1, 0), Cell::new(2, 0))] } else { vec![] };
        House::new(4, 2, vec![left, right], doors)
    }

    #[test]
    fn movement_respects_walls_and_doors() {
        let h = two_rooms(true).unwrap();
        assert_eq!(h.try_move(Cell::new(0, 0), Action::Up), Cell::new(0, 0));
        assert_eq!(h.try_move(Cell::new(0, 0), Action::Left), Cell::new(0, 0));
        assert_eq!(h.try_move(Cell::new(1, 1), Action::Right), Cell::new(1, 1), "no door on bottom row");
        assert_eq!(h.try_move(Cell::new(1, 0), Action::Right), Cell::new(2, 0));
        assert_eq!(h.try_move(Cell::new(2, 0), Action::Left), Cell::new(1, 0));
        assert_eq!(h.try_move(Cell::new(1, 1), Action::Stay), Cell::new(1, 1));
    }

    #[test]
    fn disconnected_rooms_rejected() {
        assert!(matches!(two_rooms(false), Err(HouseError::Invalid(_))));
    }

    #[test]
    fn noiseless_step_identifies_room() {
        let h = two_rooms(true).unwrap();
        let det = DetectorModel::new(1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cell = Cell::new(0, 0);
        for action in [Action::Right, Action::Right, Action::Down, Action::Up, Action::Left] {
            let (next, conf) = step(&h, &det, 2, cell, action, &mut rng);
            assert!(next.manhattan(cell) <= 1);
            let c = h.concept_at(next).unwrap();
            for (i, &s) in conf.scores().iter().enumerate() {
                assert_eq!(s >= 0.9, i == c.index());
            }
            cell = next;
        }
    }

    #[test]
    fn success_needs_three_positions() {
        let h = two_rooms(true).unwrap();
        let inside = Cell::new(2, 0);
        let outside = Cell::new(1, 0);
        assert!(success_check(&h, &[outside, inside, inside, inside], ConceptId(1)));
        assert!(!success_check(&h, &[inside, inside, outside], ConceptId(1)));
        assert!(!success_check(&h, &[inside, inside], ConceptId(1)));
        assert!(!success_check(&h, &[], ConceptId(1)));
    }

    #[test]
    fn house_json_roundtrip() {
        let h = two_rooms(true).unwrap();
        let json = h.to_json();
        assert!(json.starts_with(r#"{"width":4,"height":2,"rooms":[{"id":0,"concept":0,"cells":[[0,0],"#));
        assert_eq!(House::from_json(&json).unwrap(), h);
        assert!(House::from_json(r#"{"width":1,"height":1,"rooms":[],"doors":[]}"#).is_err());
    }
}
