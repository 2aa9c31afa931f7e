use serde::{Deserialize, Serialize};

use super::{generate_house, ground_truth_relations, ConceptDistances, GroundTruthRelations, House, HouseError, HouseParams};

pub const DEFAULT_TRAIN_HOUSES: usize = 200;
pub const DEFAULT_VALID_HOUSES: usize = 20;
pub const DEFAULT_TEST_HOUSES: usize = 50;

const SPLIT_STRIDE: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSplit {
    Train,
    Valid,
    Test,
}

/// House seeds for the train / validation / test splits plus the generator
/// parameters that turn a seed into a house.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub params: HouseParams,
    pub train: Vec<u64>,
    pub valid: Vec<u64>,
    pub test: Vec<u64>,
}

impl CorpusManifest {
    /// Disjoint seed ranges derived from the global seed.
    pub fn new(seed: u64, params: HouseParams, train: usize, valid: usize, test: usize) -> Self {
        let base = seed.wrapping_mul(10 * SPLIT_STRIDE);
        let range = |offset: u64, n: usize| (0..n as u64).map(|i| base.wrapping_add(offset + i)).collect();
        Self {
            seed,
            params,
            train: range(0, train),
            valid: range(SPLIT_STRIDE, valid),
            test: range(2 * SPLIT_STRIDE, test),
        }
    }

    pub fn with_defaults(seed: u64) -> Self {
        Self::new(seed, HouseParams::default(), DEFAULT_TRAIN_HOUSES, DEFAULT_VALID_HOUSES, DEFAULT_TEST_HOUSES)
    }

    pub fn seeds(&self, split: CorpusSplit) -> &[u64] {
        match split {
            CorpusSplit::Train => &self.train,
            CorpusSplit::Valid => &self.valid,
            CorpusSplit::Test => &self.test,
        }
    }

    pub fn house_file_name(seed: u64) -> String {
        format!("house_{seed}.json")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// A house together with its cached ground truth and distance fields.
#[derive(Debug, Clone)]
pub struct HouseRecord {
    pub seed: u64,
    pub house: House,
    pub relations: GroundTruthRelations,
    pub distances: ConceptDistances,
}

impl HouseRecord {
    /// Ground-truth sampling is seeded from the house seed.
    pub fn new(seed: u64, house: House, concepts: usize, budget: usize, trials: usize) -> Self {
        let relations = ground_truth_relations(&house, concepts, budget, trials, seed ^ 0x9e37_79b9_7f4a_7c15);
        let distances = ConceptDistances::new(&house, concepts);
        Self { seed, house, relations, distances }
    }

    pub fn generate(seed: u64, params: &HouseParams, budget: usize, trials: usize) -> Result<Self, HouseError> {
        let house = generate_house(seed, params)?;
        Ok(Self::new(seed, house, params.vocabulary.len(), budget, trials))
    }
}
