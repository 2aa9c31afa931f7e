//! The probabilistic relation graph.
//!
//! Every unordered pair of nodes carries a latent Bernoulli variable `z`
//! ("the two concepts are close-by") with prior `psi_prior`, observed
//! through a binary noisy channel with false-positive rate `psi_obs_0` and
//! false-negative rate `psi_obs_1`. Per-episode evidence is kept as
//! positive/negative counts, which are sufficient statistics for the
//! posterior.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::{ConceptId, ConceptVocabulary, RelationObservation, SemanticVector};

/// False-positive rate used when no tuned value is available.
pub const DEFAULT_PSI_OBS_0: f64 = 0.001;
/// False-negative rate used when no tuned value is available.
pub const DEFAULT_PSI_OBS_1: f64 = 0.15;
pub const DEFAULT_PRIOR_CLAMP: f64 = 0.01;

/// Largest f64 strictly below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid edge parameters: {0}")]
    InvalidParams(String),
    #[error("self-relation on node {0}")]
    SelfRelation(usize),
    #[error("node id {id} out of range for {nodes} nodes")]
    NodeOutOfRange { id: usize, nodes: usize },
    #[error("no reachability samples for pair ({0}, {1})")]
    NoSamples(usize, usize),
    #[error("prior clamp {0} must lie in (0, 0.5)")]
    InvalidClamp(f64),
    #[error("expected {expected} entries for {nodes} nodes, got {got}")]
    SizeMismatch { nodes: usize, expected: usize, got: usize },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid graph file: {0}")]
    Invalid(String),
}

/// Number of unordered pairs over `nodes` nodes.
pub fn pair_count(nodes: usize) -> usize {
    nodes * nodes.saturating_sub(1) / 2
}

/// Row-major upper-triangular index of the pair `{i, j}`, `i != j`.
#[inline]
pub fn pair_index(nodes: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(a != b && b < nodes);
    a * nodes - a * (a + 1) / 2 + (b - a - 1)
}

/// Iterates pairs `(i, j)`, `i < j`, in storage order.
pub fn pairs(nodes: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..nodes).flat_map(move |i| (i + 1..nodes).map(move |j| (i, j)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub psi_prior: f64,
    /// P(y = 1 | z = 0).
    pub psi_obs_0: f64,
    /// P(y = 0 | z = 1).
    pub psi_obs_1: f64,
}

impl EdgeParams {
    pub fn new(psi_prior: f64, psi_obs_0: f64, psi_obs_1: f64) -> Result<Self, GraphError> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(psi_prior) || !open(psi_obs_0) || !open(psi_obs_1) {
            return Err(GraphError::InvalidParams(format!(
                "prior {psi_prior}, fp {psi_obs_0}, fn {psi_obs_1} must all lie in (0, 1)"
            )));
        }
        if psi_obs_0 + psi_obs_1 >= 1.0 {
            return Err(GraphError::InvalidParams(format!(
                "fp {psi_obs_0} + fn {psi_obs_1} must be below 1"
            )));
        }
        Ok(Self { psi_prior, psi_obs_0, psi_obs_1 })
    }

    /// Log odds of `z = 1` after `pos` positive and `neg` negative samples.
    pub fn log_odds(&self, pos: u32, neg: u32) -> f64 {
        let prior = (self.psi_prior / (1.0 - self.psi_prior)).ln();
        let pos_ratio = ((1.0 - self.psi_obs_1) / self.psi_obs_0).ln();
        let neg_ratio = (self.psi_obs_1 / (1.0 - self.psi_obs_0)).ln();
        prior + f64::from(pos) * pos_ratio + f64::from(neg) * neg_ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeBelief {
    pub params: EdgeParams,
    pub pos_count: u32,
    pub neg_count: u32,
}

impl EdgeBelief {
    pub fn new(params: EdgeParams) -> Self {
        Self { params, pos_count: 0, neg_count: 0 }
    }

    pub fn log_odds(&self) -> f64 {
        self.params.log_odds(self.pos_count, self.neg_count)
    }

    /// P(z = 1 | counts), kept strictly inside (0, 1).
    pub fn posterior(&self) -> f64 {
        posterior_from_log_odds(self.log_odds())
    }
}

fn posterior_from_log_odds(lo: f64) -> f64 {
    let p = if lo >= 0.0 { 1.0 / (1.0 + (-lo).exp()) } else { let e = lo.exp(); e / (1.0 + e) };
    p.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

/// Posterior of a single edge.
pub fn posterior(belief: &EdgeBelief) -> f64 {
    belief.posterior()
}

/// Symmetric matrix of prior probabilities stored as its upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatrix {
    nodes: usize,
    values: Vec<f64>,
}

impl PriorMatrix {
    pub fn from_upper(nodes: usize, values: Vec<f64>) -> Result<Self, GraphError> {
        let expected = pair_count(nodes);
        if values.len() != expected {
            return Err(GraphError::SizeMismatch { nodes, expected, got: values.len() });
        }
        Ok(Self { nodes, values })
    }

    pub fn uniform(nodes: usize, value: f64) -> Self {
        Self { nodes, values: vec![value; pair_count(nodes)] }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[pair_index(self.nodes, i, j)]
    }

    pub fn upper(&self) -> &[f64] {
        &self.values
    }
}

/// Positive and total sample counts for every unordered pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSamples {
    nodes: usize,
    positives: Vec<u64>,
    totals: Vec<u64>,
}

impl RelationSamples {
    pub fn new(nodes: usize) -> Self {
        Self { nodes, positives: vec![0; pair_count(nodes)], totals: vec![0; pair_count(nodes)] }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn add(&mut self, i: usize, j: usize, z: bool) {
        self.add_counts(i, j, u64::from(z), 1);
    }

    pub fn add_counts(&mut self, i: usize, j: usize, positives: u64, total: u64) {
        debug_assert!(positives <= total);
        let k = pair_index(self.nodes, i, j);
        self.positives[k] += positives;
        self.totals[k] += total;
    }

    pub fn merge(&mut self, other: &RelationSamples) {
        assert_eq!(self.nodes, other.nodes, "sample sets over different node counts");
        for k in 0..self.totals.len() {
            self.positives[k] += other.positives[k];
            self.totals[k] += other.totals[k];
        }
    }

    pub fn counts(&self, i: usize, j: usize) -> (u64, u64) {
        let k = pair_index(self.nodes, i, j);
        (self.positives[k], self.totals[k])
    }
}

/// Maximum-likelihood Bernoulli prior per pair, clipped to
/// `[clamp, 1 - clamp]` so that evidence can still move it.
pub fn learn_prior(samples: &RelationSamples, clamp: f64) -> Result<PriorMatrix, GraphError> {
    if !(clamp > 0.0 && clamp < 0.5) {
        return Err(GraphError::InvalidClamp(clamp));
    }
    let mut values = Vec::with_capacity(pair_count(samples.nodes));
    for (i, j) in pairs(samples.nodes) {
        let (pos, total) = samples.counts(i, j);
        if total == 0 {
            return Err(GraphError::NoSamples(i, j));
        }
        values.push((pos as f64 / total as f64).clamp(clamp, 1.0 - clamp));
    }
    PriorMatrix::from_upper(samples.nodes, values)
}

/// A concept path ending at the target, with its joint belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub path: Vec<ConceptId>,
    pub score: f64,
}

impl Plan {
    pub fn target(&self) -> ConceptId {
        *self.path.last().expect("plan path is never empty")
    }

    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

/// The first hop of a plan, or the target itself for a singleton plan.
pub fn next_subgoal(plan: &Plan) -> ConceptId {
    if plan.path.len() >= 2 {
        plan.path[1]
    } else {
        plan.path[0]
    }
}

#[derive(Debug, Clone)]
struct Label {
    cost: f64,
    path: Vec<usize>,
}

impl Label {
    /// Lower cost first, then fewer hops, then the lexicographically
    /// smaller node sequence.
    fn better_than(&self, other: &Label) -> bool {
        if self.cost != other.cost {
            return self.cost < other.cost;
        }
        if self.path.len() != other.path.len() {
            return self.path.len() < other.path.len();
        }
        self.path < other.path
    }
}

/// Max-product simple path from any node in `sources` to `target`.
///
/// `weight(u, v)` is the probability attached to the edge; zero means the
/// edge is absent. The search is Dijkstra over `-ln weight` starting from a
/// virtual source joined to every source node at zero cost, with ties broken
/// by hop count and then by the node sequence. Returns `None` when the
/// target cannot be reached.
pub fn max_product_path(
    nodes: usize,
    weight: impl Fn(usize, usize) -> f64,
    sources: &SemanticVector,
    target: ConceptId,
) -> Option<Plan> {
    assert!(target.0 < nodes, "target out of range");
    let mut best: Vec<Option<Label>> = vec![None; nodes];
    let mut done = vec![false; nodes];
    for s in sources.active().filter(|s| s.0 < nodes) {
        best[s.0] = Some(Label { cost: 0.0, path: vec![s.0] });
    }

    loop {
        let mut pick: Option<usize> = None;
        for v in 0..nodes {
            if done[v] {
                continue;
            }
            if let Some(label) = &best[v] {
                match pick {
                    Some(p) if !label.better_than(best[p].as_ref().unwrap()) => {}
                    _ => pick = Some(v),
                }
            }
        }
        let u = pick?;
        done[u] = true;
        if u == target.0 {
            break;
        }
        let from = best[u].clone().unwrap();
        for v in 0..nodes {
            if done[v] || v == u {
                continue;
            }
            let w = weight(u, v);
            if w <= 0.0 {
                continue;
            }
            let mut path = from.path.clone();
            path.push(v);
            let candidate = Label { cost: from.cost - w.ln(), path };
            if best[v].as_ref().is_none_or(|cur| candidate.better_than(cur)) {
                best[v] = Some(candidate);
            }
        }
    }

    let label = best[target.0].take()?;
    let score = label.path.windows(2).map(|e| weight(e[0], e[1])).product();
    Some(Plan { path: label.path.into_iter().map(ConceptId).collect(), score })
}

/// Serialized form of a [`RelationGraph`].
#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    vocabulary: ConceptVocabulary,
    psi_obs: [f64; 2],
    prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    psi_obs_edges: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<[u32; 2]>>,
}

/// Complete graph of edge beliefs over `K + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    vocabulary: ConceptVocabulary,
    edges: Vec<EdgeBelief>,
}

impl RelationGraph {
    pub fn new(vocabulary: ConceptVocabulary, prior: &PriorMatrix, psi_obs_0: f64, psi_obs_1: f64) -> Result<Self, GraphError> {
        let nodes = vocabulary.node_count();
        if prior.nodes() != nodes {
            return Err(GraphError::SizeMismatch { nodes, expected: pair_count(nodes), got: prior.upper().len() });
        }
        let edges = prior
            .upper()
            .iter()
            .map(|&p| EdgeParams::new(p, psi_obs_0, psi_obs_1).map(EdgeBelief::new))
            .collect::<Result<_, _>>()?;
        Ok(Self { vocabulary, edges })
    }

    /// Every edge starts from the same prior.
    pub fn uniform(vocabulary: ConceptVocabulary, psi_prior: f64, psi_obs_0: f64, psi_obs_1: f64) -> Result<Self, GraphError> {
        let prior = PriorMatrix::uniform(vocabulary.node_count(), psi_prior);
        Self::new(vocabulary, &prior, psi_obs_0, psi_obs_1)
    }

    pub fn vocabulary(&self) -> &ConceptVocabulary {
        &self.vocabulary
    }

    pub fn nodes(&self) -> usize {
        self.vocabulary.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[EdgeBelief] {
        &self.edges
    }

    pub fn edge(&self, i: ConceptId, j: ConceptId) -> Result<&EdgeBelief, GraphError> {
        let k = self.checked_index(i.0, j.0)?;
        Ok(&self.edges[k])
    }

    pub fn edge_mut(&mut self, i: ConceptId, j: ConceptId) -> Result<&mut EdgeBelief, GraphError> {
        let k = self.checked_index(i.0, j.0)?;
        Ok(&mut self.edges[k])
    }

    fn checked_index(&self, i: usize, j: usize) -> Result<usize, GraphError> {
        let nodes = self.nodes();
        for id in [i, j] {
            if id >= nodes {
                return Err(GraphError::NodeOutOfRange { id, nodes });
            }
        }
        if i == j {
            return Err(GraphError::SelfRelation(i));
        }
        Ok(pair_index(nodes, i, j))
    }

    /// Posterior of the edge `{i, j}`; panics on invalid ids.
    pub fn posterior(&self, i: ConceptId, j: ConceptId) -> f64 {
        self.edges[pair_index(self.nodes(), i.0, j.0)].posterior()
    }

    pub fn prior_matrix(&self) -> PriorMatrix {
        PriorMatrix { nodes: self.nodes(), values: self.edges.iter().map(|e| e.params.psi_prior).collect() }
    }

    /// Full symmetric posterior matrix with zeros on the diagonal.
    pub fn posterior_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.nodes();
        let mut m = vec![vec![0.0; n]; n];
        for ((i, j), e) in pairs(n).zip(&self.edges) {
            let p = e.posterior();
            m[i][j] = p;
            m[j][i] = p;
        }
        m
    }

    /// The shared observation channel, if every edge uses the same one.
    pub fn shared_obs(&self) -> Option<(f64, f64)> {
        let first = self.edges.first()?.params;
        self.edges
            .iter()
            .all(|e| e.params.psi_obs_0 == first.psi_obs_0 && e.params.psi_obs_1 == first.psi_obs_1)
            .then_some((first.psi_obs_0, first.psi_obs_1))
    }

    /// Replaces the observation channel on every edge.
    pub fn set_obs(&mut self, psi_obs_0: f64, psi_obs_1: f64) -> Result<(), GraphError> {
        for e in &mut self.edges {
            e.params = EdgeParams::new(e.params.psi_prior, psi_obs_0, psi_obs_1)?;
        }
        Ok(())
    }

    pub fn with_obs(mut self, psi_obs_0: f64, psi_obs_1: f64) -> Result<Self, GraphError> {
        self.set_obs(psi_obs_0, psi_obs_1)?;
        Ok(self)
    }

    /// Copy with every prior replaced by `psi_prior`, counts cleared.
    pub fn with_uniform_prior(&self, psi_prior: f64) -> Result<Self, GraphError> {
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeParams::new(psi_prior, e.params.psi_obs_0, e.params.psi_obs_1).map(EdgeBelief::new))
            .collect::<Result<_, _>>()?;
        Ok(Self { vocabulary: self.vocabulary.clone(), edges })
    }

    /// Accumulates relation samples. The whole batch is validated before
    /// any count changes.
    pub fn update(&mut self, observations: &[RelationObservation]) -> Result<(), GraphError> {
        let indices = observations
            .iter()
            .map(|o| self.checked_index(o.i.0, o.j.0))
            .collect::<Result<Vec<_>, _>>()?;
        for (k, o) in indices.into_iter().zip(observations) {
            let e = &mut self.edges[k];
            if o.value {
                e.pos_count += 1;
            } else {
                e.neg_count += 1;
            }
        }
        Ok(())
    }

    /// Clears the per-episode evidence; posteriors fall back to priors.
    pub fn reset_episode(&mut self) {
        for e in &mut self.edges {
            e.pos_count = 0;
            e.neg_count = 0;
        }
    }

    pub fn has_evidence(&self) -> bool {
        self.edges.iter().any(|e| e.pos_count > 0 || e.neg_count > 0)
    }

    pub fn to_json(&self) -> String {
        let (fp, fnr) = self.shared_obs().unwrap_or_else(|| {
            let p = self.edges[0].params;
            (p.psi_obs_0, p.psi_obs_1)
        });
        let file = GraphFile {
            vocabulary: self.vocabulary.clone(),
            psi_obs: [fp, fnr],
            prior: self.edges.iter().map(|e| e.params.psi_prior).collect(),
            psi_obs_edges: self
                .shared_obs()
                .is_none()
                .then(|| self.edges.iter().map(|e| [e.params.psi_obs_0, e.params.psi_obs_1]).collect()),
            counts: self
                .has_evidence()
                .then(|| self.edges.iter().map(|e| [e.pos_count, e.neg_count]).collect()),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("graph file serializes");
        s.push('\n');
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_json().into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_slice(bytes).map_err(|e| GraphError::Parse {
            offset: byte_offset(bytes, e.line(), e.column()),
            message: e.to_string(),
        })?;
        let nodes = file.vocabulary.node_count();
        let expected = pair_count(nodes);
        let check_len = |got: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(GraphError::SizeMismatch { nodes, expected, got })
            }
        };
        check_len(file.prior.len())?;
        let channels = match file.psi_obs_edges {
            Some(v) => {
                check_len(v.len())?;
                v
            }
            None => vec![file.psi_obs; expected],
        };
        let counts = match file.counts {
            Some(v) => {
                check_len(v.len())?;
                v
            }
            None => vec![[0, 0]; expected],
        };
        let edges = file
            .prior
            .iter()
            .zip(&channels)
            .zip(&counts)
            .map(|((&p, ch), c)| {
                EdgeParams::new(p, ch[0], ch[1])
                    .map(|params| EdgeBelief { params, pos_count: c[0], neg_count: c[1] })
            })
            .collect::<Result<_, _>>()
            .map_err(|e| GraphError::Invalid(e.to_string()))?;
        Ok(Self { vocabulary: file.vocabulary, edges })
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        Self::from_bytes(s.as_bytes())
    }
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (n, l) in bytes.split(|&b| b == b'\n').enumerate() {
        if n + 1 == line {
            return (offset + column.saturating_sub(1)).min(bytes.len());
        }
        offset += l.len() + 1;
    }
    bytes.len()
}

/// Best plan from the active nodes of `current` to `target` under the
/// graph's posteriors.
///
/// The unknown node can start a plan but is never entered: it has no
/// region a locomotion policy could walk to.
pub fn plan(graph: &RelationGraph, current: &SemanticVector, target: ConceptId) -> Plan {
    let nodes = graph.nodes();
    let posteriors: Vec<f64> = graph.edges.iter().map(EdgeBelief::posterior).collect();
    let unknown = nodes - 1;
    max_product_path(nodes, |u, v| if v == unknown { 0.0 } else { posteriors[pair_index(nodes, u, v)] }, current, target)
        .expect("complete graph with positive posteriors always has a path")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn channel(prior: f64) -> EdgeParams {
        EdgeParams::new(prior, DEFAULT_PSI_OBS_0, DEFAULT_PSI_OBS_1).unwrap()
    }

    fn belief(pos: u32, neg: u32) -> EdgeBelief {
        EdgeBelief { params: channel(0.5), pos_count: pos, neg_count: neg }
    }

    #[test]
    fn edge_params_validation() {
        assert!(EdgeParams::new(0.0, 0.1, 0.1).is_err());
        assert!(EdgeParams::new(0.5, 1.0, 0.1).is_err());
        assert!(EdgeParams::new(0.5, 0.6, 0.4).is_err());
        assert!(EdgeParams::new(0.5, 0.5, 0.49).is_ok());
    }

    #[test]
    fn posterior_examples() {
        assert_eq!(belief(0, 0).posterior(), 0.5);
        // 0.85 / (0.85 + 0.001)
        assert!((belief(1, 0).posterior() - 0.998_824_911_868_390_1).abs() < 1e-12);
        // 0.15 / (0.15 + 0.999)
        assert!((belief(0, 1).posterior() - 0.130_548_302_872_062_66).abs() < 1e-12);
        // (0.15 / 0.999)^10, brute-force over z in {0, 1}
        let like1 = 0.15f64.powi(10);
        let like0 = 0.999f64.powi(10);
        let expected = like1 / (like1 + like0);
        assert!((belief(0, 10).posterior() - expected).abs() < 1e-18);
        assert!((expected - 5.8e-9).abs() < 1e-10);
    }

    #[test]
    fn posterior_convergence() {
        assert!(belief(10, 0).posterior() >= 0.999);
        assert!(belief(0, 10).posterior() <= 0.01);
        let p = belief(50, 0).posterior();
        assert!(p > 0.0 && p < 1.0);
        let q = belief(0, 500).posterior();
        assert!(q > 0.0 && q < 1.0);
    }

    fn graph3() -> RelationGraph {
        RelationGraph::uniform(ConceptVocabulary::new(["a", "b", "c"]).unwrap(), 0.5, 0.001, 0.15).unwrap()
    }

    #[test]
    fn update_and_reset() {
        let mut g = graph3();
        assert_eq!(g.edge_count(), 6);
        g.update(&[RelationObservation::new(ConceptId(1), ConceptId(0), true)]).unwrap();
        assert_eq!(g.edge(ConceptId(0), ConceptId(1)).unwrap().pos_count, 1);
        assert_eq!(g.edge(ConceptId(1), ConceptId(0)).unwrap().pos_count, 1);
        assert_eq!(g.edges().iter().map(|e| e.pos_count + e.neg_count).sum::<u32>(), 1);

        let before = g.clone();
        g.update(&[]).unwrap();
        assert_eq!(g, before);

        let err = g.update(&[RelationObservation::new(ConceptId(0), ConceptId(2), false), RelationObservation::new(ConceptId(2), ConceptId(2), true)]);
        assert_eq!(err, Err(GraphError::SelfRelation(2)));
        assert_eq!(g, before, "failed batch leaves the graph untouched");

        g.update(&[RelationObservation::new(ConceptId(0), ConceptId(3), false)]).unwrap();
        let params: Vec<_> = g.edges().iter().map(|e| e.params).collect();
        g.reset_episode();
        let once = g.clone();
        g.reset_episode();
        assert_eq!(g, once);
        assert!(g.edges().iter().all(|e| e.posterior() == 0.5));
        assert_eq!(params, g.edges().iter().map(|e| e.params).collect::<Vec<_>>());
    }

    #[test]
    fn split_updates_match_joint_update() {
        let a = RelationObservation::new(ConceptId(0), ConceptId(1), true);
        let b = RelationObservation::new(ConceptId(0), ConceptId(1), false);
        let mut g1 = graph3();
        g1.update(&[a]).unwrap();
        g1.update(&[b]).unwrap();
        let mut g2 = graph3();
        g2.update(&[a, b]).unwrap();
        assert_eq!(g1.posterior(ConceptId(0), ConceptId(1)), g2.posterior(ConceptId(0), ConceptId(1)));
    }

    /// Graph over {A, B, C} plus unknown with hand-set posteriors.
    fn weights(table: &[((usize, usize), f64)], default: f64) -> impl Fn(usize, usize) -> f64 + '_ {
        move |u, v| {
            table
                .iter()
                .find(|((a, b), _)| (*a == u && *b == v) || (*a == v && *b == u))
                .map_or(default, |(_, w)| *w)
        }
    }

    #[test]
    fn plan_prefers_two_strong_hops() {
        let w = weights(&[((0, 2), 0.1), ((0, 1), 0.9), ((1, 2), 0.8)], 0.1);
        let p = max_product_path(4, w, &SemanticVector::single(3, ConceptId(0)), ConceptId(2)).unwrap();
        assert_eq!(p.path, vec![ConceptId(0), ConceptId(1), ConceptId(2)]);
        assert!((p.score - 0.72).abs() < 1e-12);
        assert_eq!(next_subgoal(&p), ConceptId(1));
    }

    #[test]
    fn plan_picks_best_start() {
        let w = weights(&[((0, 2), 0.3), ((1, 2), 0.5)], 0.1);
        let current = SemanticVector::from_concepts(&[true, true, false]);
        let p = max_product_path(4, w, &current, ConceptId(2)).unwrap();
        assert_eq!(p.path, vec![ConceptId(1), ConceptId(2)]);
        assert!((p.score - 0.5).abs() < 1e-12);
        assert_eq!(next_subgoal(&p), ConceptId(2));
    }

    #[test]
    fn plan_at_goal_is_singleton() {
        let mut g = graph3();
        g.update(&[RelationObservation::new(ConceptId(0), ConceptId(2), false)]).unwrap();
        let current = SemanticVector::from_concepts(&[true, false, true]);
        let p = plan(&g, &current, ConceptId(2));
        assert_eq!(p, Plan { path: vec![ConceptId(2)], score: 1.0 });
        assert_eq!(next_subgoal(&p), ConceptId(2));
    }

    #[test]
    fn plan_unreachable_without_edges() {
        let w = |u: usize, v: usize| if (u, v) == (0, 1) || (u, v) == (1, 0) { 1.0 } else { 0.0 };
        assert!(max_product_path(4, w, &SemanticVector::single(3, ConceptId(0)), ConceptId(2)).is_none());
    }

    #[test]
    fn equal_weights_prefer_fewer_hops_then_lexicographic() {
        // All-one edges: every path has score 1, the direct edge wins.
        let p = max_product_path(5, |_, _| 1.0, &SemanticVector::single(4, ConceptId(3)), ConceptId(0)).unwrap();
        assert_eq!(p.path, vec![ConceptId(3), ConceptId(0)]);
        // Two equal two-hop routes 0-1-3 and 0-2-3; direct edge absent.
        let w = |u: usize, v: usize| {
            let (a, b) = (u.min(v), u.max(v));
            match (a, b) {
                (0, 1) | (1, 3) | (0, 2) | (2, 3) => 0.5,
                _ => 0.0,
            }
        };
        let p = max_product_path(4, w, &SemanticVector::single(3, ConceptId(0)), ConceptId(3)).unwrap();
        assert_eq!(p.path, vec![ConceptId(0), ConceptId(1), ConceptId(3)]);
    }

    #[test]
    fn next_subgoal_cases() {
        let plan = |p: &[usize]| Plan { path: p.iter().copied().map(ConceptId).collect(), score: 1.0 };
        assert_eq!(next_subgoal(&plan(&[0, 1, 2])), ConceptId(1));
        assert_eq!(next_subgoal(&plan(&[2])), ConceptId(2));
        assert_eq!(next_subgoal(&plan(&[0, 2])), ConceptId(2));
    }

    #[test]
    fn learn_prior_frequency_and_clamp() {
        let mut s = RelationSamples::new(3);
        s.add_counts(0, 1, 30, 50);
        s.add_counts(0, 2, 0, 50);
        s.add_counts(1, 2, 50, 50);
        let m = learn_prior(&s, DEFAULT_PRIOR_CLAMP).unwrap();
        assert!((m.get(0, 1) - 0.6).abs() < 1e-15);
        assert_eq!(m.get(2, 0), 0.01);
        assert_eq!(m.get(1, 2), 0.99);

        let empty = RelationSamples::new(3);
        assert_eq!(learn_prior(&empty, 0.01), Err(GraphError::NoSamples(0, 1)));
        assert_eq!(learn_prior(&s, 0.5), Err(GraphError::InvalidClamp(0.5)));
    }

    #[test]
    fn pair_indexing_is_dense() {
        for n in 1..10 {
            let idx: Vec<_> = pairs(n).map(|(i, j)| pair_index(n, i, j)).collect();
            assert_eq!(idx, (0..pair_count(n)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn serialization_roundtrip_and_errors() {
        let mut g = graph3();
        let bytes = g.to_bytes();
        assert_eq!(RelationGraph::from_bytes(&bytes).unwrap(), g);
        assert!(!String::from_utf8(bytes.clone()).unwrap().contains("counts"));

        g.update(&[RelationObservation::new(ConceptId(0), ConceptId(1), true)]).unwrap();
        let dump = g.to_bytes();
        assert_eq!(RelationGraph::from_bytes(&dump).unwrap(), g);
        assert_eq!(g.clone().to_bytes(), dump);

        let truncated = &dump[..dump.len() / 2];
        match RelationGraph::from_bytes(truncated) {
            Err(GraphError::Parse { offset, .. }) => assert!(offset <= truncated.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad = br#"{"vocabulary":["a","b"],"psi_obs":[0.001,0.15],"prior":[0.5]}"#;
        assert!(matches!(RelationGraph::from_bytes(bad), Err(GraphError::SizeMismatch { .. })));
        let garbage = b"{\"vocabulary\": [\"a\", 3]}";
        match RelationGraph::from_bytes(garbage) {
            Err(GraphError::Parse { offset, .. }) => assert!(offset > 10 && offset <= garbage.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn posterior_monotone_in_counts(
            prior in 0.01f64..0.99,
            fp in 0.001f64..0.45,
            fnr in 0.001f64..0.45,
            pos in 0u32..50,
            neg in 0u32..50,
        ) {
            let p = EdgeParams::new(prior, fp, fnr).unwrap();
            let b = EdgeBelief { params: p, pos_count: pos, neg_count: neg };
            let up = EdgeBelief { pos_count: pos + 1, ..b };
            let down = EdgeBelief { neg_count: neg + 1, ..b };
            prop_assert!(up.log_odds() > b.log_odds());
            prop_assert!(down.log_odds() < b.log_odds());
            prop_assert!(up.posterior() >= b.posterior());
            prop_assert!(down.posterior() <= b.posterior());
            prop_assert!(b.posterior() > 0.0 && b.posterior() < 1.0);
        }

        #[test]
        fn graph_roundtrip(priors in proptest::collection::vec(0.01f64..0.99, 10), counts in proptest::collection::vec((0u32..20, 0u32..20), 10)) {
            let vocab = ConceptVocabulary::new(["a", "b", "c", "d"]).unwrap();
            let prior = PriorMatrix::from_upper(5, priors).unwrap();
            let mut g = RelationGraph::new(vocab, &prior, 0.01, 0.2).unwrap();
            for (e, (p, n)) in g.edges.iter_mut().zip(counts) {
                e.pos_count = p;
                e.neg_count = n;
            }
            let back = RelationGraph::from_bytes(&g.to_bytes()).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_bytes(), g.to_bytes());
        }
    }
}
