//! Hierarchical episode loop.
//!
//! Every step the agent moves, reads the detector, smooths the reading and
//! pushes the resulting semantic vector into a replay buffer. Every `N`
//! steps (and at `t = 0`) the buffer is ORed into one evidence vector, the
//! graph posterior is updated, the buffer is cleared and a new plan picks the
//! sub-goal handed to the locomotion policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::{bit_or, extract_observations, ConceptId, SemanticVector, SmoothingFilter};
use crate::graph::{max_product_path, next_subgoal, plan, GraphError, Plan, RelationGraph};
use crate::houseworld::{
    plan_distance, step, success_check, Cell, DetectorModel, GroundTruthRelations, HouseRecord,
};
use crate::locomotion::{act, LocomotionSpec, VisitCounts};

/// Consecutive smoothed target detections that trigger a self-stop.
pub const SELF_STOP_STREAK: usize = 3;
pub const DEFAULT_REPLAN_PERIOD: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("invalid episode: {0}")]
    Episode(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    Brm,
    Pure,
    Random,
    BrmUniformPrior,
    OptimalPlanner,
}

impl AgentMode {
    pub const ALL: [AgentMode; 5] =
        [AgentMode::Brm, AgentMode::Pure, AgentMode::Random, AgentMode::BrmUniformPrior, AgentMode::OptimalPlanner];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentMode::Brm => "brm",
            AgentMode::Pure => "pure",
            AgentMode::Random => "random",
            AgentMode::BrmUniformPrior => "brm_uniform_prior",
            AgentMode::OptimalPlanner => "optimal_planner",
        }
    }
}

impl std::str::FromStr for AgentMode {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AgentError::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The environment ends the episode once the success check holds.
    Environment,
    /// The agent stops on its own; success only if it stops in a target room.
    #[serde(rename = "self")]
    SelfStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub mode: AgentMode,
    pub replan_period: usize,
    pub horizon: usize,
    pub termination: Termination,
}

impl AgentConfig {
    pub fn new(mode: AgentMode, replan_period: usize, horizon: usize, termination: Termination) -> Result<Self, AgentError> {
        if replan_period == 0 || replan_period > horizon {
            return Err(AgentError::Config(format!("need 1 <= N ({replan_period}) <= H ({horizon})")));
        }
        Ok(Self { mode, replan_period, horizon, termination })
    }
}

/// A fixed episode: where the agent starts and what it looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub house_seed: u64,
    pub start_cell: Cell,
    pub target: ConceptId,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps_taken: usize,
    pub plan_distance: Option<usize>,
    pub trajectory: Vec<Cell>,
    pub subgoal_log: Vec<(usize, ConceptId)>,
}

impl EpisodeResult {
    pub fn final_cell(&self) -> Cell {
        *self.trajectory.last().expect("trajectory holds the start cell")
    }
}

/// Per-step and per-replan records emitted by [`run_episode_traced`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Start { cell: Cell, semantic: SemanticVector, target: ConceptId },
    Replan { t: usize, posterior: Option<Vec<Vec<f64>>>, plan: Option<Plan>, subgoal: ConceptId },
    Step { t: usize, cell: Cell, semantic: SemanticVector },
    End { success: bool, steps: usize },
}

enum Planner {
    Posterior(RelationGraph),
    GroundTruth(GroundTruthRelations),
    Direct,
}

/// The high-level half of the agent: evidence buffer, graph updates and
/// sub-goal selection. Fed only with smoothed semantic vectors, so a trace
/// can be replayed through it.
pub struct SubgoalController {
    planner: Planner,
    target: ConceptId,
    buffer: Vec<SemanticVector>,
    subgoal: ConceptId,
    last_plan: Option<Plan>,
}

impl SubgoalController {
    /// Builds the controller for `mode`. The graph's episode counts are
    /// cleared; `BrmUniformPrior` replaces every prior with 0.5.
    pub fn new(mode: AgentMode, graph: &RelationGraph, relations: &GroundTruthRelations, target: ConceptId) -> Result<Self, AgentError> {
        if target.index() >= graph.vocabulary().len() {
            return Err(AgentError::Episode(format!("target {target} is not a named concept")));
        }
        let planner = match mode {
            AgentMode::Brm => {
                let mut g = graph.clone();
                g.reset_episode();
                Planner::Posterior(g)
            }
            AgentMode::BrmUniformPrior => Planner::Posterior(graph.with_uniform_prior(0.5)?),
            AgentMode::OptimalPlanner => Planner::GroundTruth(relations.clone()),
            AgentMode::Pure | AgentMode::Random => Planner::Direct,
        };
        Ok(Self { planner, target, buffer: Vec::new(), subgoal: target, last_plan: None })
    }

    pub fn subgoal(&self) -> ConceptId {
        self.subgoal
    }

    pub fn last_plan(&self) -> Option<&Plan> {
        self.last_plan.as_ref()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn graph(&self) -> Option<&RelationGraph> {
        match &self.planner {
            Planner::Posterior(g) => Some(g),
            _ => None,
        }
    }

    pub fn observe(&mut self, v: SemanticVector) {
        self.buffer.push(v);
    }

    /// Folds the buffered evidence into the graph, clears the buffer and
    /// re-plans from `current`.
    pub fn replan(&mut self, current: &SemanticVector) -> Result<ConceptId, AgentError> {
        if let Planner::Posterior(graph) = &mut self.planner {
            if !self.buffer.is_empty() {
                let evidence = bit_or(&self.buffer).expect("buffer is non-empty");
                graph.update(&extract_observations(&evidence))?;
            }
        }
        self.buffer.clear();
        self.last_plan = match &self.planner {
            Planner::Posterior(graph) => Some(plan(graph, current, self.target)),
            Planner::GroundTruth(gt) => {
                let w = |u: usize, v: usize| if gt.related(ConceptId(u), ConceptId(v)) { 1.0 } else { 0.0 };
                max_product_path(gt.nodes(), w, current, self.target)
            }
            Planner::Direct => None,
        };
        // Unreachable under the boolean graph: pursue the target directly.
        self.subgoal = self.last_plan.as_ref().map_or(self.target, next_subgoal);
        Ok(self.subgoal)
    }
}

/// Re-derives the sub-goal sequence from a recorded stream of smoothed
/// vectors: `semantics[0]` is the reading at the start cell and
/// `semantics[t]` the reading after step `t`.
pub fn replay_subgoals(
    mode: AgentMode,
    graph: &RelationGraph,
    relations: &GroundTruthRelations,
    target: ConceptId,
    replan_period: usize,
    semantics: &[SemanticVector],
) -> Result<Vec<(usize, ConceptId)>, AgentError> {
    let mut controller = SubgoalController::new(mode, graph, relations, target)?;
    let mut log = Vec::new();
    for t in 0..semantics.len().saturating_sub(1) {
        if t % replan_period == 0 {
            log.push((t, controller.replan(&semantics[t])?));
        }
        controller.observe(semantics[t + 1]);
    }
    Ok(log)
}

pub fn run_episode(
    record: &HouseRecord,
    episode: &EpisodeConfig,
    agent: &AgentConfig,
    graph: &RelationGraph,
    locomotion: &LocomotionSpec,
    detector: &DetectorModel,
) -> Result<EpisodeResult, AgentError> {
    run_episode_traced(record, episode, agent, graph, locomotion, detector, &mut |_| {})
}

pub fn run_episode_traced(
    record: &HouseRecord,
    episode: &EpisodeConfig,
    agent: &AgentConfig,
    graph: &RelationGraph,
    locomotion: &LocomotionSpec,
    detector: &DetectorModel,
    trace: &mut dyn FnMut(TraceEvent),
) -> Result<EpisodeResult, AgentError> {
    let house = &record.house;
    let k = graph.vocabulary().len();
    let target = episode.target;
    if !house.is_open(episode.start_cell) {
        return Err(AgentError::Episode(format!("start cell {:?} is not walkable", episode.start_cell)));
    }
    let start_concept = house.concept_at(episode.start_cell).expect("open cell has a room");
    let plan_steps = plan_distance(&record.relations, &SemanticVector::single(k, start_concept), target);

    let mut controller = SubgoalController::new(agent.mode, graph, &record.relations, target)?;
    let loco = match agent.mode {
        AgentMode::Random => LocomotionSpec::random(),
        _ => *locomotion,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(episode.rng_seed);
    let mut filter = SmoothingFilter::with_defaults(k);
    let mut visits = VisitCounts::new(house);

    let mut cell = episode.start_cell;
    visits.visit(house, cell);
    let mut current = filter.push(&detector.emit(house.concept_at(cell), k, &mut rng));
    trace(TraceEvent::Start { cell, semantic: current, target });

    let mut trajectory = vec![cell];
    let mut subgoal_log = Vec::new();
    let mut success = false;
    let mut steps = 0;
    let mut streak = 0;
    for t in 0..agent.horizon {
        if t % agent.replan_period == 0 {
            let subgoal = controller.replan(&current)?;
            subgoal_log.push((t, subgoal));
            trace(TraceEvent::Replan {
                t,
                posterior: controller.graph().map(RelationGraph::posterior_matrix),
                plan: controller.last_plan().cloned(),
                subgoal,
            });
        }
        let action = act(&loco, house, &record.distances, cell, controller.subgoal(), &visits, &mut rng);
        let (next, reading) = step(house, detector, k, cell, action, &mut rng);
        cell = next;
        visits.visit(house, cell);
        trajectory.push(cell);
        current = filter.push(&reading);
        controller.observe(current);
        steps = t + 1;
        trace(TraceEvent::Step { t: steps, cell, semantic: current });

        match agent.termination {
            Termination::Environment => {
                if success_check(house, &trajectory, target) {
                    success = true;
                    break;
                }
            }
            Termination::SelfStop => {
                streak = if current.get(target) { streak + 1 } else { 0 };
                if streak >= SELF_STOP_STREAK {
                    success = house.concept_at(cell) == Some(target);
                    break;
                }
            }
        }
    }
    trace(TraceEvent::End { success, steps });
    Ok(EpisodeResult { success, steps_taken: steps, plan_distance: plan_steps, trajectory, subgoal_log })
}
