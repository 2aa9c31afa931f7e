//! Concept vocabulary, detector confidences and binary semantic evidence.
//!
//! A vocabulary of `K` named concepts induces `K + 1` graph nodes: the extra
//! node (id `K`) is the "unknown" concept, active whenever no named concept
//! is detected.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported vocabulary; semantic vectors are stored as a `u64` mask.
pub const MAX_CONCEPTS: usize = 63;

pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_PERSISTENCE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConceptError {
    #[error("vocabulary must contain between 1 and {MAX_CONCEPTS} concepts, got {0}")]
    VocabularySize(usize),
    #[error("concept name at index {0} is empty")]
    EmptyName(usize),
    #[error("duplicate concept name {0:?}")]
    DuplicateName(String),
    #[error("unknown concept name {0:?}")]
    UnknownName(String),
    #[error("confidence score {score} at index {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
    #[error("expected {expected} scores, got {got}")]
    ScoreCount { expected: usize, got: usize },
    #[error("empty evidence window")]
    EmptyWindow,
    #[error("semantic vectors of different sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("concept id {id} out of range for {nodes} nodes")]
    IdOutOfRange { id: usize, nodes: usize },
}

/// Dense concept id in `0..=K`; id `K` is the unknown node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub usize);

impl ConceptId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered list of concept labels. Serializes as a plain JSON array of
/// strings; a concept's id is its array index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ConceptVocabulary {
    names: Vec<String>,
}

impl ConceptVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, ConceptError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() || names.len() > MAX_CONCEPTS {
            return Err(ConceptError::VocabularySize(names.len()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(ConceptError::EmptyName(i));
            }
            if names[..i].contains(name) {
                return Err(ConceptError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// The eight room types used throughout the house world.
    pub fn rooms() -> Self {
        Self::new([
            "kitchen",
            "living room",
            "dining room",
            "bedroom",
            "bathroom",
            "office",
            "garage",
            "outdoor",
        ])
        .expect("static vocabulary is valid")
    }

    /// Number of named concepts `K`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of graph nodes, `K + 1`.
    pub fn node_count(&self) -> usize {
        self.names.len() + 1
    }

    pub fn unknown(&self) -> ConceptId {
        ConceptId(self.names.len())
    }

    pub fn is_unknown(&self, id: ConceptId) -> bool {
        id.0 == self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: ConceptId) -> &str {
        if self.is_unknown(id) {
            "unknown"
        } else {
            &self.names[id.0]
        }
    }

    pub fn id(&self, name: &str) -> Result<ConceptId, ConceptError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(ConceptId)
            .ok_or_else(|| ConceptError::UnknownName(name.to_string()))
    }

    /// Ids of the named concepts, excluding unknown.
    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> {
        (0..self.names.len()).map(ConceptId)
    }
}

impl Default for ConceptVocabulary {
    fn default() -> Self {
        Self::rooms()
    }
}

impl TryFrom<Vec<String>> for ConceptVocabulary {
    type Error = ConceptError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<ConceptVocabulary> for Vec<String> {
    fn from(v: ConceptVocabulary) -> Self {
        v.names
    }
}

/// Per-concept detector confidences in `[0, 1]`, one per named concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector {
    scores: Vec<f64>,
}

impl ConfidenceVector {
    pub fn new(scores: Vec<f64>) -> Result<Self, ConceptError> {
        for (index, &score) in scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&score) {
                return Err(ConceptError::ScoreOutOfRange { index, score });
            }
        }
        Ok(Self { scores })
    }

    pub fn zeros(k: usize) -> Self {
        Self { scores: vec![0.0; k] }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Binary detection vector over `K + 1` nodes.
///
/// Vectors built from concept detections keep the unknown bit set exactly
/// when no concept bit is set. Vectors produced by [`bit_or`] keep the
/// accumulated unknown bit as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SemanticVector {
    mask: u64,
    nodes: u8,
}

impl SemanticVector {
    /// Builds a vector from the `K` concept bits and derives the unknown bit.
    pub fn from_concepts(bits: &[bool]) -> Self {
        assert!(bits.len() <= MAX_CONCEPTS, "too many concepts");
        let k = bits.len();
        let mut mask = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |m, (i, _)| m | (1 << i));
        if mask == 0 {
            mask = 1 << k;
        }
        Self { mask, nodes: (k + 1) as u8 }
    }

    /// A vector with exactly one concept active.
    pub fn single(k: usize, id: ConceptId) -> Self {
        assert!(id.0 <= k, "concept id out of range");
        Self { mask: 1 << id.0, nodes: (k + 1) as u8 }
    }

    /// The all-zero detection: only the unknown bit is set.
    pub fn unknown(k: usize) -> Self {
        Self::single(k, ConceptId(k))
    }

    /// Builds a vector from raw `K + 1` bits without enforcing the unknown
    /// invariant.
    pub fn from_raw_bits(bits: &[bool]) -> Self {
        assert!(!bits.is_empty() && bits.len() <= MAX_CONCEPTS + 1);
        let mask = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |m, (i, _)| m | (1 << i));
        Self { mask, nodes: bits.len() as u8 }
    }

    pub fn node_count(&self) -> usize {
        self.nodes as usize
    }

    pub fn unknown_id(&self) -> ConceptId {
        ConceptId(self.nodes as usize - 1)
    }

    #[inline]
    pub fn get(&self, id: ConceptId) -> bool {
        id.0 < self.nodes as usize && self.mask & (1 << id.0) != 0
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn count_ones(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn active(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.nodes as usize).filter(|&i| self.mask & (1 << i) != 0).map(ConceptId)
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.nodes as usize).map(|i| self.mask & (1 << i) != 0).collect()
    }
}

impl Serialize for SemanticVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let bits: Vec<u8> = self.bits().into_iter().map(u8::from).collect();
        bits.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SemanticVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(d)?;
        if bits.is_empty() || bits.len() > MAX_CONCEPTS + 1 || bits.iter().any(|&b| b > 1) {
            return Err(serde::de::Error::custom("semantic vector must be 1..=64 bits of 0/1"));
        }
        Ok(Self::from_raw_bits(&bits.iter().map(|&b| b == 1).collect::<Vec<_>>()))
    }
}

/// One noisy sample `y` of the relation between two nodes, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationObservation {
    pub i: ConceptId,
    pub j: ConceptId,
    pub value: bool,
}

impl RelationObservation {
    /// Canonicalizes the pair so that `i <= j`. Equal ids are kept as-is and
    /// rejected by the graph update.
    pub fn new(a: ConceptId, b: ConceptId, value: bool) -> Self {
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        Self { i, j, value }
    }
}

/// Streaming form of [`smooth_filter`]: a concept bit is on when its score
/// has stayed at or above `threshold` for the last `persistence` frames.
#[derive(Debug, Clone)]
pub struct SmoothingFilter {
    threshold: f64,
    persistence: usize,
    run: Vec<usize>,
}

impl SmoothingFilter {
    pub fn new(k: usize, threshold: f64, persistence: usize) -> Self {
        assert!(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
        assert!(persistence >= 1, "persistence must be at least 1");
        Self { threshold, persistence, run: vec![0; k] }
    }

    pub fn with_defaults(k: usize) -> Self {
        Self::new(k, DEFAULT_THRESHOLD, DEFAULT_PERSISTENCE)
    }

    pub fn reset(&mut self) {
        self.run.iter_mut().for_each(|r| *r = 0);
    }

    pub fn push(&mut self, frame: &ConfidenceVector) -> SemanticVector {
        assert_eq!(frame.len(), self.run.len(), "confidence vector size mismatch");
        for (run, &score) in self.run.iter_mut().zip(frame.scores()) {
            *run = if score >= self.threshold { *run + 1 } else { 0 };
        }
        let bits: Vec<bool> = self.run.iter().map(|&r| r >= self.persistence).collect();
        SemanticVector::from_concepts(&bits)
    }
}

/// Thresholds a confidence stream with a sliding persistence window.
///
/// Bit `i` at step `t` is set iff every score of concept `i` in
/// `[t - persistence + 1, t]` is at least `threshold`; the first
/// `persistence - 1` steps therefore never set a concept bit.
pub fn smooth_filter(stream: &[ConfidenceVector], threshold: f64, persistence: usize) -> Vec<SemanticVector> {
    let Some(first) = stream.first() else {
        return Vec::new();
    };
    let mut filter = SmoothingFilter::new(first.len(), threshold, persistence);
    stream.iter().map(|frame| filter.push(frame)).collect()
}

/// Union of a window of semantic vectors. The unknown bit is ORed like any
/// other bit, so the result records every visited region.
pub fn bit_or(window: &[SemanticVector]) -> Result<SemanticVector, ConceptError> {
    let first = window.first().ok_or(ConceptError::EmptyWindow)?;
    let mut mask = 0;
    for v in window {
        if v.nodes != first.nodes {
            return Err(ConceptError::SizeMismatch(first.nodes as usize, v.nodes as usize));
        }
        mask |= v.mask;
    }
    Ok(SemanticVector { mask, nodes: first.nodes })
}

/// Turns an evidence vector into relation samples: both bits set gives a
/// positive, exactly one set gives a negative, neither gives nothing.
pub fn extract_observations(evidence: &SemanticVector) -> Vec<RelationObservation> {
    let n = evidence.node_count();
    let mut out = Vec::new();
    for i in 0..n {
        let bi = evidence.get(ConceptId(i));
        for j in i + 1..n {
            let bj = evidence.get(ConceptId(j));
            if bi || bj {
                out.push(RelationObservation { i: ConceptId(i), j: ConceptId(j), value: bi && bj });
            }
        }
    }
    out
}
