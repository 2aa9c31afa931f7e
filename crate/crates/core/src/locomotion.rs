//! Goal-conditioned low-level policies.
//!
//! `Scripted` stands in for a learned controller: it walks the BFS shortest
//! path to the sub-goal when a room of that type is within `sight_radius`
//! moves, otherwise it explores with a walk biased towards rarely visited
//! cells. With probability `slip` it takes a uniformly random action
//! instead. `Oracle` is the scripted policy with unlimited sight and no slip.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::ConceptId;
use crate::houseworld::{Action, Cell, ConceptDistances, House, UNREACHABLE};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid locomotion spec: {0}")]
pub struct LocomotionError(String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocomotionKind {
    Random,
    Scripted,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocomotionSpec {
    pub kind: LocomotionKind,
    pub sight_radius: u32,
    pub slip: f64,
    /// Exponent of the visit-count penalty used while exploring; 0 is an
    /// unbiased random walk.
    pub explore_bias: f64,
}

pub const DEFAULT_SIGHT_RADIUS: u32 = 10;
pub const DEFAULT_SLIP: f64 = 0.2;
pub const DEFAULT_EXPLORE_BIAS: f64 = 0.15;

impl LocomotionSpec {
    pub fn new(kind: LocomotionKind, sight_radius: u32, slip: f64) -> Result<Self, LocomotionError> {
        Self { kind, sight_radius, slip, explore_bias: DEFAULT_EXPLORE_BIAS }.validated()
    }

    pub fn validated(self) -> Result<Self, LocomotionError> {
        if self.sight_radius < 1 {
            return Err(LocomotionError("sight_radius must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.slip) {
            return Err(LocomotionError(format!("slip {} must lie in [0, 1)", self.slip)));
        }
        if !(self.explore_bias >= 0.0 && self.explore_bias.is_finite()) {
            return Err(LocomotionError(format!("explore_bias {} must be a finite non-negative number", self.explore_bias)));
        }
        Ok(self)
    }

    pub fn scripted() -> Self {
        Self { kind: LocomotionKind::Scripted, sight_radius: DEFAULT_SIGHT_RADIUS, slip: DEFAULT_SLIP, explore_bias: DEFAULT_EXPLORE_BIAS }
    }

    pub fn random() -> Self {
        Self { kind: LocomotionKind::Random, ..Self::scripted() }
    }

    pub fn oracle() -> Self {
        Self { kind: LocomotionKind::Oracle, sight_radius: u32::MAX, slip: 0.0, ..Self::scripted() }
    }

    fn effective(&self) -> (u32, f64) {
        match self.kind {
            LocomotionKind::Oracle => (u32::MAX, 0.0),
            _ => (self.sight_radius, self.slip),
        }
    }
}

impl Default for LocomotionSpec {
    fn default() -> Self {
        Self::scripted()
    }
}

/// Per-episode visit counts used by exploration.
#[derive(Debug, Clone)]
pub struct VisitCounts(Vec<u32>);

impl VisitCounts {
    pub fn new(house: &House) -> Self {
        Self(vec![0; house.cell_count()])
    }

    pub fn visit(&mut self, house: &House, cell: Cell) {
        self.0[house.index(cell)] += 1;
    }

    pub fn get(&self, house: &House, cell: Cell) -> u32 {
        self.0[house.index(cell)]
    }
}

/// One action towards `subgoal`.
pub fn act(
    spec: &LocomotionSpec,
    house: &House,
    distances: &ConceptDistances,
    cell: Cell,
    subgoal: ConceptId,
    visits: &VisitCounts,
    rng: &mut impl Rng,
) -> Action {
    if spec.kind == LocomotionKind::Random {
        return Action::random(rng);
    }
    let (sight, slip) = spec.effective();
    if slip > 0.0 && rng.gen::<f64>() < slip {
        return Action::random(rng);
    }
    let here = distances.distance(house, cell, subgoal);
    if here != UNREACHABLE && here <= sight {
        return greedy_step(house, distances, cell, subgoal, here);
    }
    explore_step(house, cell, visits, spec.explore_bias, rng)
}

/// First move of a BFS shortest path; staying put once inside the region.
fn greedy_step(house: &House, distances: &ConceptDistances, cell: Cell, subgoal: ConceptId, here: u32) -> Action {
    if here == 0 {
        return Action::Stay;
    }
    house
        .neighbors(cell)
        .find(|&(_, n)| distances.distance(house, n, subgoal) == here - 1)
        .map(|(a, _)| a)
        .expect("a finite BFS distance always has a decreasing neighbour")
}

fn explore_step(house: &House, cell: Cell, visits: &VisitCounts, bias: f64, rng: &mut impl Rng) -> Action {
    let options: Vec<(Action, f64)> = house
        .neighbors(cell)
        .map(|(a, n)| (a, (1.0 + f64::from(visits.get(house, n))).powf(-bias)))
        .collect();
    if options.is_empty() {
        return Action::Stay;
    }
    let total: f64 = options.iter().map(|(_, w)| w).sum();
    let mut pick = rng.gen::<f64>() * total;
    for &(a, w) in &options {
        if pick < w {
            return a;
        }
        pick -= w;
    }
    options[options.len() - 1].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::houseworld::{generate_house, HouseParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spec_validation() {
        assert!(LocomotionSpec::new(LocomotionKind::Scripted, 0, 0.2).is_err());
        assert!(LocomotionSpec::new(LocomotionKind::Scripted, 3, 1.0).is_err());
        assert!(LocomotionSpec::new(LocomotionKind::Scripted, 3, 0.0).is_ok());
    }

    #[test]
    fn greedy_step_gets_closer() {
        let params = HouseParams::default();
        let spec = LocomotionSpec { slip: 0.0, ..LocomotionSpec::scripted() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let h = generate_house(seed, &params).unwrap();
            let d = ConceptDistances::new(&h, 8);
            let visits = VisitCounts::new(&h);
            for cell in h.open_cells().step_by(7) {
                for c in 0..8 {
                    let goal = ConceptId(c);
                    let dist = d.distance(&h, cell, goal);
                    if dist == UNREACHABLE || dist == 0 || dist > spec.sight_radius {
                        continue;
                    }
                    let next = h.try_move(cell, act(&spec, &h, &d, cell, goal, &visits, &mut rng));
                    assert_eq!(d.distance(&h, next, goal), dist - 1);
                }
            }
        }
    }

    #[test]
    fn oracle_walks_straight_to_goal() {
        let params = HouseParams::default();
        let h = generate_house(3, &params).unwrap();
        let d = ConceptDistances::new(&h, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let visits = VisitCounts::new(&h);
        let goal = h.rooms()[0].concept;
        let mut cell = h.open_cells().max_by_key(|&c| d.distance(&h, c, goal)).unwrap();
        let mut dist = d.distance(&h, cell, goal);
        while dist > 0 {
            cell = h.try_move(cell, act(&LocomotionSpec::oracle(), &h, &d, cell, goal, &visits, &mut rng));
            let now = d.distance(&h, cell, goal);
            assert_eq!(now, dist - 1);
            dist = now;
        }
        assert_eq!(act(&LocomotionSpec::oracle(), &h, &d, cell, goal, &visits, &mut rng), Action::Stay);
    }

    #[test]
    fn deterministic_given_rng_state() {
        let h = generate_house(1, &HouseParams::default()).unwrap();
        let d = ConceptDistances::new(&h, 8);
        let visits = VisitCounts::new(&h);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut cell = Cell::new(0, 0);
            (0..200)
                .map(|_| {
                    let a = act(&LocomotionSpec::scripted(), &h, &d, cell, ConceptId(7), &visits, &mut rng);
                    cell = h.try_move(cell, a);
                    cell
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn absent_subgoal_explores() {
        let h = generate_house(2, &HouseParams::default()).unwrap();
        let d = ConceptDistances::new(&h, 8);
        let mut visits = VisitCounts::new(&h);
        let spec = LocomotionSpec { slip: 0.0, explore_bias: 50.0, ..LocomotionSpec::scripted() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start = Cell::new(0, 0);
        visits.visit(&h, start);
        // The unknown node never has rooms; the walk must leave the start cell.
        let a = act(&spec, &h, &d, start, ConceptId(8), &visits, &mut rng);
        assert_ne!(h.try_move(start, a), start);
    }
}
