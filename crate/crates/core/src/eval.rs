//! Metrics, evaluation suites and experiment drivers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_episode, AgentConfig, AgentError, AgentMode, EpisodeConfig, Termination};
use crate::concepts::{ConceptId, SemanticVector};
use crate::graph::{learn_prior, GraphError, PriorMatrix, RelationGraph, RelationSamples};
use crate::houseworld::{
    generate_house, plan_distance, sample_reachability, CorpusManifest, CorpusSplit, DetectorModel, House, HouseError,
    HouseParams, HouseRecord,
    SUCCESS_DWELL, UNREACHABLE,
};
use crate::locomotion::LocomotionSpec;

/// Plan distances above this are pooled into one "5+" bucket.
pub const MAX_BUCKET: usize = 5;
pub const DEFAULT_SUITE_EPISODES: usize = 1000;
pub const DEFAULT_MIN_PER_BUCKET: usize = 50;
pub const DEFAULT_TOP_UP_ATTEMPTS: usize = 200_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episodes")]
    NoEpisodes,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("invalid shortest path length {0}; must be positive")]
    InvalidShortest(f64),
    #[error("episode references house seed {0} which is not in the corpus")]
    MissingHouse(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    House(#[from] HouseError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Success weighted by path length over `(success, L, P)` triples.
pub fn spl(results: &[(bool, f64, f64)]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let mut total = 0.0;
    for &(success, shortest, taken) in results {
        if shortest.is_nan() || shortest <= 0.0 {
            return Err(EvalError::InvalidShortest(shortest));
        }
        total += spl_term(success, shortest, taken);
    }
    Ok(total / results.len() as f64)
}

pub fn spl_term(success: bool, shortest: f64, taken: f64) -> f64 {
    if success {
        shortest / shortest.max(taken)
    } else {
        0.0
    }
}

pub fn bucket_of(plan_distance: usize) -> usize {
    plan_distance.min(MAX_BUCKET)
}

/// Train / validation / test houses with cached ground truth.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub train: Vec<HouseRecord>,
    pub valid: Vec<HouseRecord>,
    pub test: Vec<HouseRecord>,
}

/// Generates the houses for `seeds`, in parallel and in input order.
pub fn generate_houses(seeds: &[u64], params: &HouseParams) -> Result<Vec<(u64, House)>, EvalError> {
    seeds
        .par_iter()
        .map(|&seed| Ok((seed, generate_house(seed, params)?)))
        .collect()
}

/// Attaches ground truth to loaded houses, in parallel and in input order.
pub fn build_records(houses: Vec<(u64, House)>, concepts: usize, budget: usize, trials: usize) -> Vec<HouseRecord> {
    houses
        .into_par_iter()
        .map(|(seed, house)| HouseRecord::new(seed, house, concepts, budget, trials))
        .collect()
}

/// Runs `f` on a dedicated pool of `jobs` worker threads.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

impl Corpus {
    pub fn generate(manifest: CorpusManifest, budget: usize, trials: usize) -> Result<Self, EvalError> {
        let split = |s: CorpusSplit| -> Result<Vec<HouseRecord>, EvalError> {
            manifest
                .seeds(s)
                .par_iter()
                .map(|&seed| HouseRecord::generate(seed, &manifest.params, budget, trials).map_err(EvalError::from))
                .collect()
        };
        let (train, valid, test) = (split(CorpusSplit::Train)?, split(CorpusSplit::Valid)?, split(CorpusSplit::Test)?);
        Ok(Self { manifest, train, valid, test })
    }

    pub fn split(&self, s: CorpusSplit) -> &[HouseRecord] {
        match s {
            CorpusSplit::Train => &self.train,
            CorpusSplit::Valid => &self.valid,
            CorpusSplit::Test => &self.test,
        }
    }
}

/// Pools reachability samples over `(seed, house)` training pairs and fits
/// the prior. Each house's walks are seeded from its seed.
pub fn learn_prior_driver(
    houses: &[(u64, &House)],
    concepts: usize,
    budget: usize,
    trials: usize,
    clamp: f64,
) -> Result<PriorMatrix, EvalError> {
    if houses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let per_house: Vec<RelationSamples> = houses
        .par_iter()
        .map(|&(seed, house)| sample_reachability(house, concepts, budget, trials, seed).samples())
        .collect();
    let mut pooled = RelationSamples::new(concepts + 1);
    for s in &per_house {
        pooled.merge(s);
    }
    Ok(learn_prior(&pooled, clamp)?)
}

/// One fixed evaluation episode plus the data needed to score it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEpisode {
    pub config: EpisodeConfig,
    pub plan_distance: usize,
    pub shortest_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub episodes_total: usize,
    pub min_per_bucket: usize,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            episodes_total: DEFAULT_SUITE_EPISODES,
            min_per_bucket: DEFAULT_MIN_PER_BUCKET,
            max_attempts: DEFAULT_TOP_UP_ATTEMPTS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub episodes: Vec<SuiteEpisode>,
    /// Buckets that could not be filled to `min_per_bucket`, with the count reached.
    pub shortfalls: Vec<(usize, usize)>,
}

impl EvalSuite {
    pub fn bucket_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.episodes {
            *counts.entry(bucket_of(e.plan_distance)).or_insert(0) += 1;
        }
        counts
    }
}

fn sample_episode(houses: &[HouseRecord], concepts: usize, rng: &mut ChaCha8Rng) -> Option<SuiteEpisode> {
    let rec = &houses[rng.gen_range(0..houses.len())];
    let open: usize = rec.house.rooms().iter().map(|r| r.cells.len()).sum();
    let mut pick = rng.gen_range(0..open);
    let room = rec
        .house
        .rooms()
        .iter()
        .find(|r| {
            if pick < r.cells.len() {
                true
            } else {
                pick -= r.cells.len();
                false
            }
        })
        .expect("pick within open cells");
    let start = room.cells[pick];
    let present: Vec<ConceptId> = (0..concepts)
        .map(ConceptId)
        .filter(|&c| c != room.concept && rec.house.has_concept(c))
        .collect();
    let rng_seed = rng.gen::<u64>();
    if present.is_empty() {
        return None;
    }
    let target = present[rng.gen_range(0..present.len())];
    let dist = rec.distances.distance(&rec.house, start, target);
    if dist == UNREACHABLE {
        return None;
    }
    let plan = plan_distance(&rec.relations, &SemanticVector::single(concepts, room.concept), target)?;
    Some(SuiteEpisode {
        config: EpisodeConfig { house_seed: rec.seed, start_cell: start, target, rng_seed },
        plan_distance: plan,
        shortest_len: dist + (SUCCESS_DWELL as u32 - 1),
    })
}

/// Samples `episodes_total` valid episodes, then tops up every plan-distance
/// bucket `1..=5` that holds fewer than `min_per_bucket`, within
/// `max_attempts` extra draws. Episodes must start outside every target
/// room, have a physically reachable target, and a finite plan distance.
pub fn build_eval_suite(houses: &[HouseRecord], concepts: usize, params: &SuiteParams) -> Result<EvalSuite, EvalError> {
    if houses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    assert!(params.min_per_bucket >= 1, "min_per_bucket must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut episodes = Vec::with_capacity(params.episodes_total);
    let mut counts = [0usize; MAX_BUCKET + 1];
    let mut attempts = 0;
    while episodes.len() < params.episodes_total {
        attempts += 1;
        if attempts > params.episodes_total * 100 + params.max_attempts {
            return Err(EvalError::NoEpisodes);
        }
        if let Some(e) = sample_episode(houses, concepts, &mut rng) {
            counts[bucket_of(e.plan_distance)] += 1;
            episodes.push(e);
        }
    }
    let needy = |counts: &[usize]| (1..=MAX_BUCKET).any(|b| counts[b] < params.min_per_bucket);
    let mut extra = 0;
    while needy(&counts) && extra < params.max_attempts {
        extra += 1;
        if let Some(e) = sample_episode(houses, concepts, &mut rng) {
            let b = bucket_of(e.plan_distance);
            if counts[b] < params.min_per_bucket {
                counts[b] += 1;
                episodes.push(e);
            }
        }
    }
    let shortfalls = (1..=MAX_BUCKET)
        .filter(|&b| counts[b] < params.min_per_bucket)
        .map(|b| (b, counts[b]))
        .collect();
    Ok(EvalSuite { episodes, shortfalls })
}

/// One CSV row per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode_seed: u64,
    pub mode: String,
    pub plan_steps: usize,
    pub success: bool,
    pub steps: usize,
    #[serde(rename = "L")]
    pub shortest: u32,
    pub spl_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub plan_steps: usize,
    pub n: usize,
    pub success_rate: f64,
    pub spl: f64,
    pub mean_steps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub n: usize,
    pub success_rate: f64,
    pub spl: f64,
    pub mean_steps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub mode: AgentMode,
    pub horizon: usize,
    pub replan_period: usize,
    pub termination: Termination,
    pub corpus: String,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub buckets: Vec<BucketMetrics>,
    pub overall: OverallMetrics,
}

impl MetricsReport {
    pub fn bucket(&self, plan_steps: usize) -> Option<&BucketMetrics> {
        self.buckets.iter().find(|b| b.plan_steps == plan_steps)
    }

    /// Aggregates rows whose bucket satisfies `keep`.
    pub fn pooled(rows: &[EpisodeRow], keep: impl Fn(usize) -> bool) -> Option<OverallMetrics> {
        let selected: Vec<&EpisodeRow> = rows.iter().filter(|r| keep(r.plan_steps)).collect();
        summarize(&selected)
    }
}

fn summarize(rows: &[&EpisodeRow]) -> Option<OverallMetrics> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len();
    let successes: Vec<&&EpisodeRow> = rows.iter().filter(|r| r.success).collect();
    let mean_steps = (!successes.is_empty())
        .then(|| successes.iter().map(|r| r.steps as f64).sum::<f64>() / successes.len() as f64);
    Some(OverallMetrics {
        n,
        success_rate: successes.len() as f64 / n as f64,
        spl: rows.iter().map(|r| r.spl_term).sum::<f64>() / n as f64,
        mean_steps,
    })
}

/// Builds the per-bucket and overall report from episode rows.
pub fn aggregate(meta: ReportMeta, rows: &[EpisodeRow]) -> Result<MetricsReport, EvalError> {
    let overall = summarize(&rows.iter().collect::<Vec<_>>()).ok_or(EvalError::NoEpisodes)?;
    let buckets = (1..=MAX_BUCKET)
        .filter_map(|b| {
            let selected: Vec<&EpisodeRow> = rows.iter().filter(|r| r.plan_steps == b).collect();
            summarize(&selected).map(|m| BucketMetrics {
                plan_steps: b,
                n: m.n,
                success_rate: m.success_rate,
                spl: m.spl,
                mean_steps: m.mean_steps,
            })
        })
        .collect();
    Ok(MetricsReport { meta, buckets, overall })
}

/// Everything shared by the agents of one benchmark.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkEnv<'a> {
    pub houses: &'a [HouseRecord],
    pub graph: &'a RelationGraph,
    pub locomotion: &'a LocomotionSpec,
    pub detector: &'a DetectorModel,
    pub corpus_id: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub agent: AgentConfig,
    pub report: MetricsReport,
    pub rows: Vec<EpisodeRow>,
}

/// Runs every agent on every suite episode. Episodes are independent and
/// seeded, so the output does not depend on the number of worker threads.
pub fn run_benchmark(suite: &EvalSuite, agents: &[AgentConfig], env: &BenchmarkEnv<'_>) -> Result<Vec<BenchmarkRun>, EvalError> {
    if suite.episodes.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let index: BTreeMap<u64, &HouseRecord> = env.houses.iter().map(|r| (r.seed, r)).collect();
    for e in &suite.episodes {
        if !index.contains_key(&e.config.house_seed) {
            return Err(EvalError::MissingHouse(e.config.house_seed));
        }
    }
    agents
        .iter()
        .map(|agent| {
            let rows = suite
                .episodes
                .par_iter()
                .map(|e| {
                    let rec = index[&e.config.house_seed];
                    let res = run_episode(rec, &e.config, agent, env.graph, env.locomotion, env.detector)?;
                    let shortest = e.shortest_len;
                    Ok(EpisodeRow {
                        episode_seed: e.config.rng_seed,
                        mode: agent.mode.as_str().to_string(),
                        plan_steps: bucket_of(e.plan_distance),
                        success: res.success,
                        steps: res.steps_taken,
                        shortest,
                        spl_term: spl_term(res.success, f64::from(shortest), res.steps_taken as f64),
                    })
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            let meta = ReportMeta {
                mode: agent.mode,
                horizon: agent.horizon,
                replan_period: agent.replan_period,
                termination: agent.termination,
                corpus: env.corpus_id.to_string(),
                episodes: rows.len(),
            };
            let report = aggregate(meta, &rows)?;
            Ok(BenchmarkRun { agent: *agent, report, rows })
        })
        .collect()
}

/// Fraction of paired episodes where `a` succeeds whenever `b` does.
pub fn paired_win_or_tie_rate(a: &[EpisodeRow], b: &[EpisodeRow]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired rows must align");
    let good = a.iter().zip(b).filter(|(x, y)| x.success >= y.success).count();
    good as f64 / a.len().max(1) as f64
}

pub fn default_obs_grid() -> Vec<(f64, f64)> {
    let fps = [0.001, 0.01, 0.05, 0.1];
    let fns = [0.05, 0.15, 0.3, 0.45];
    fps.iter().flat_map(|&fp| fns.iter().map(move |&fnr| (fp, fnr))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub psi_obs_0: f64,
    pub psi_obs_1: f64,
    pub success_rate: f64,
    pub spl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: (f64, f64),
    pub table: Vec<GridPoint>,
}

/// Picks the observation channel maximizing BRM success on `suite`; ties go
/// to higher SPL, then to the smaller false-negative rate.
pub fn grid_search_obs(
    suite: &EvalSuite,
    grid: &[(f64, f64)],
    agent: &AgentConfig,
    env: &BenchmarkEnv<'_>,
) -> Result<GridSearchResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let brm = AgentConfig { mode: AgentMode::Brm, ..*agent };
    let mut table = Vec::with_capacity(grid.len());
    for &(fp, fnr) in grid {
        let graph = env.graph.clone().with_obs(fp, fnr)?;
        let run_env = BenchmarkEnv { graph: &graph, ..*env };
        let run = run_benchmark(suite, &[brm], &run_env)?.remove(0);
        table.push(GridPoint {
            psi_obs_0: fp,
            psi_obs_1: fnr,
            success_rate: run.report.overall.success_rate,
            spl: run.report.overall.spl,
        });
    }
    let best = table
        .iter()
        .reduce(|best, p| {
            let better = p.success_rate > best.success_rate
                || (p.success_rate == best.success_rate
                    && (p.spl > best.spl || (p.spl == best.spl && p.psi_obs_1 < best.psi_obs_1)));
            if better {
                p
            } else {
                best
            }
        })
        .expect("grid is non-empty");
    Ok(GridSearchResult { best: (best.psi_obs_0, best.psi_obs_1), table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spl_examples() {
        assert_eq!(spl(&[(true, 10.0, 20.0)]).unwrap(), 0.5);
        assert_eq!(spl(&[(false, 10.0, 300.0)]).unwrap(), 0.0);
        assert_eq!(spl(&[(true, 10.0, 10.0), (false, 10.0, 300.0)]).unwrap(), 0.5);
        assert!(matches!(spl(&[]), Err(EvalError::NoEpisodes)));
        assert!(matches!(spl(&[(true, 0.0, 3.0)]), Err(EvalError::InvalidShortest(_))));
    }

    #[test]
    fn faster_than_shortest_is_capped() {
        assert_eq!(spl_term(true, 10.0, 5.0), 1.0);
    }

    #[test]
    fn buckets_merge_above_five() {
        assert_eq!(bucket_of(1), 1);
        assert_eq!(bucket_of(5), 5);
        assert_eq!(bucket_of(9), 5);
    }

    fn row(plan_steps: usize, success: bool, steps: usize, shortest: u32) -> EpisodeRow {
        EpisodeRow {
            episode_seed: 0,
            mode: "brm".into(),
            plan_steps,
            success,
            steps,
            shortest,
            spl_term: spl_term(success, f64::from(shortest), steps as f64),
        }
    }

    #[test]
    fn aggregate_partitions_rows() {
        let rows = vec![row(1, true, 10, 10), row(1, false, 300, 10), row(3, true, 40, 20), row(5, false, 300, 30)];
        let meta = ReportMeta {
            mode: AgentMode::Brm,
            horizon: 300,
            replan_period: 10,
            termination: Termination::Environment,
            corpus: "t".into(),
            episodes: rows.len(),
        };
        let r = aggregate(meta, &rows).unwrap();
        assert_eq!(r.buckets.iter().map(|b| b.n).sum::<usize>(), r.overall.n);
        assert_eq!(r.bucket(1).unwrap().success_rate, 0.5);
        assert_eq!(r.bucket(1).unwrap().spl, 0.5);
        assert_eq!(r.bucket(3).unwrap().spl, 0.5);
        assert_eq!(r.bucket(1).unwrap().mean_steps, Some(10.0));
        assert_eq!(r.bucket(5).unwrap().mean_steps, None);
        assert!(r.bucket(2).is_none());
        assert_eq!(r.overall.success_rate, 0.5);
        for b in &r.buckets {
            assert!(b.spl <= b.success_rate);
        }
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["meta"]["mode"] == "brm" && json["buckets"][0]["plan_steps"] == 1);
    }

    #[test]
    fn paired_rate() {
        let a = vec![row(1, true, 1, 1), row(1, false, 1, 1), row(1, false, 1, 1)];
        let b = vec![row(1, false, 1, 1), row(1, true, 1, 1), row(1, false, 1, 1)];
        assert!((paired_win_or_tie_rate(&a, &b) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn default_grid_is_valid() {
        let grid = default_obs_grid();
        assert_eq!(grid.len(), 16);
        assert!(grid.iter().all(|&(a, b)| a + b < 1.0));
    }
}
