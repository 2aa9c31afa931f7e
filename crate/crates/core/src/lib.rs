//! Bayesian relational memory for semantic navigation.
//!
//! A complete graph over room concepts holds, per edge, a Bernoulli belief
//! that the two concepts are close to each other in the current house. The
//! belief starts from a prior learned on training houses, is updated from
//! noisy co-occurrence evidence collected while the agent moves, and is
//! searched with a max-product planner to pick the next sub-goal.
//!
//! The crate also contains everything needed to exercise the memory:
//!
//! - [`houseworld`]: procedural grid houses, a noisy room-type detector and
//!   ground-truth relation sampling.
//! - [`locomotion`]: random, scripted and oracle low-level policies.
//! - [`agent`]: the hierarchical episode loop and its baselines.
//! - [`eval`]: success rate / SPL metrics, evaluation suites, prior learning,
//!   observation-noise grid search and benchmark runners.

pub mod agent;
pub mod concepts;
pub mod eval;
pub mod graph;
pub mod houseworld;
pub mod locomotion;

pub use concepts::{ConceptId, ConceptVocabulary, ConfidenceVector, RelationObservation, SemanticVector};
pub use graph::{EdgeBelief, EdgeParams, Plan, PriorMatrix, RelationGraph};
