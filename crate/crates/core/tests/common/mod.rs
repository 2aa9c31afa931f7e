#![allow(dead_code)]

use brm_core::eval::{build_eval_suite, learn_prior_driver, EvalSuite, SuiteParams};
use brm_core::graph::{DEFAULT_PRIOR_CLAMP, DEFAULT_PSI_OBS_0, DEFAULT_PSI_OBS_1};
use brm_core::houseworld::{HouseParams, HouseRecord, DEFAULT_BUDGET, DEFAULT_TRIALS};
use brm_core::{ConceptVocabulary, RelationGraph};

pub const K: usize = 8;

pub fn records(seeds: std::ops::Range<u64>, params: &HouseParams) -> Vec<HouseRecord> {
    seeds.map(|s| HouseRecord::generate(s, params, DEFAULT_BUDGET, DEFAULT_TRIALS).unwrap()).collect()
}

/// Graph with a prior learned on `train` and the default channel.
pub fn learned_graph(train: &[HouseRecord]) -> RelationGraph {
    let houses: Vec<_> = train.iter().map(|r| (r.seed, &r.house)).collect();
    let prior = learn_prior_driver(&houses, K, DEFAULT_BUDGET, DEFAULT_TRIALS, DEFAULT_PRIOR_CLAMP).unwrap();
    RelationGraph::new(ConceptVocabulary::rooms(), &prior, DEFAULT_PSI_OBS_0, DEFAULT_PSI_OBS_1).unwrap()
}

pub fn suite(houses: &[HouseRecord], total: usize, seed: u64) -> EvalSuite {
    build_eval_suite(houses, K, &SuiteParams { episodes_total: total, min_per_bucket: 1, max_attempts: 0, seed }).unwrap()
}

/// Default-sized houses: a small training set and a disjoint test set.
pub fn world() -> (RelationGraph, Vec<HouseRecord>) {
    let params = HouseParams::default();
    let train = records(0..40, &params);
    let test = records(1000..1020, &params);
    (learned_graph(&train), test)
}

pub fn small_params() -> HouseParams {
    HouseParams { width: 24, height: 16, min_room: 4, ..HouseParams::default() }
}
