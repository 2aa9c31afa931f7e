use std::fs;
use std::path::{Path, PathBuf};

use brm_core::agent::{AgentConfig, AgentMode, Termination, DEFAULT_REPLAN_PERIOD};
use brm_core::concepts::ConceptVocabulary;
use brm_core::eval::{default_obs_grid, SuiteParams, DEFAULT_MIN_PER_BUCKET, DEFAULT_SUITE_EPISODES, DEFAULT_TOP_UP_ATTEMPTS};
use brm_core::graph::DEFAULT_PRIOR_CLAMP;
use brm_core::houseworld::{
    DetectorModel, HouseParams, DEFAULT_BUDGET, DEFAULT_TEST_HOUSES, DEFAULT_TRAIN_HOUSES, DEFAULT_TRIALS, DEFAULT_VALID_HOUSES,
};
use brm_core::locomotion::LocomotionSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "BRM_OUT_DIR";

pub const DEFAULT_HORIZON: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub house: HouseParams,
    /// Random-walk length that defines a close-by relation.
    pub budget: usize,
    pub trials: usize,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            train: DEFAULT_TRAIN_HOUSES,
            valid: DEFAULT_VALID_HOUSES,
            test: DEFAULT_TEST_HOUSES,
            house: HouseParams::default(),
            budget: DEFAULT_BUDGET,
            trials: DEFAULT_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub modes: Vec<AgentMode>,
    pub horizon: usize,
    pub replan_period: usize,
    pub termination: Termination,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            modes: AgentMode::ALL.to_vec(),
            horizon: DEFAULT_HORIZON,
            replan_period: DEFAULT_REPLAN_PERIOD,
            termination: Termination::Environment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSettings {
    pub episodes: usize,
    pub min_per_bucket: usize,
    pub max_attempts: usize,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self {
            episodes: DEFAULT_SUITE_EPISODES,
            min_per_bucket: DEFAULT_MIN_PER_BUCKET,
            max_attempts: DEFAULT_TOP_UP_ATTEMPTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    /// Candidate `(psi_obs_0, psi_obs_1)` pairs.
    pub grid: Vec<(f64, f64)>,
    pub horizon: usize,
    pub replan_period: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self { grid: default_obs_grid(), horizon: 300, replan_period: DEFAULT_REPLAN_PERIOD }
    }
}

/// Everything a command needs. Missing fields take their defaults, except
/// `seed`, which a config file must state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/corpus`.
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    /// Defaults to `<output_dir>/graph.json`.
    #[serde(default)]
    pub graph: Option<PathBuf>,
    /// JSON array of concept names; replaces the corpus vocabulary.
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    #[serde(default)]
    pub corpus: CorpusSettings,
    #[serde(default)]
    pub detector: DetectorModel,
    #[serde(default)]
    pub locomotion: LocomotionSpec,
    #[serde(default)]
    pub agent: AgentSettings,
    #[serde(default)]
    pub suite: SuiteSettings,
    #[serde(default)]
    pub tune: TuneSettings,
    #[serde(default = "default_prior_clamp")]
    pub prior_clamp: f64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("brm-out")
}

fn default_prior_clamp() -> f64 {
    DEFAULT_PRIOR_CLAMP
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output_dir(),
            corpus_dir: None,
            graph: None,
            vocabulary: None,
            corpus: CorpusSettings::default(),
            detector: DetectorModel::default(),
            locomotion: LocomotionSpec::default(),
            agent: AgentSettings::default(),
            suite: SuiteSettings::default(),
            tune: TuneSettings::default(),
            prior_clamp: DEFAULT_PRIOR_CLAMP,
        }
    }
}

impl RunConfig {
    /// Reads `path` if given, then applies the output-directory environment
    /// override and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Data(format!("reading config {}: {e}", p.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::Data(format!("parsing config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
            config.output_dir = PathBuf::from(dir);
        }
        if let Some(vocab) = &config.vocabulary {
            let text =
                fs::read_to_string(vocab).map_err(|e| CliError::Data(format!("reading vocabulary {}: {e}", vocab.display())))?;
            config.corpus.house.vocabulary = serde_json::from_str::<ConceptVocabulary>(&text)
                .map_err(|e| CliError::Data(format!("parsing vocabulary {}: {e}", vocab.display())))?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let data = |e: &dyn std::fmt::Display| CliError::Data(e.to_string());
        self.detector.validated().map_err(|e| data(&e))?;
        self.locomotion.validated().map_err(|e| data(&e))?;
        self.agent_config(self.agent.modes.first().copied().unwrap_or(AgentMode::Brm))?;
        if self.corpus.budget == 0 || self.corpus.trials == 0 {
            return Err(CliError::Data("corpus budget and trials must be positive".into()));
        }
        if self.suite.episodes == 0 || self.suite.min_per_bucket == 0 {
            return Err(CliError::Data("suite episodes and min_per_bucket must be positive".into()));
        }
        if self.tune.grid.is_empty() {
            return Err(CliError::Data("tune grid is empty".into()));
        }
        Ok(())
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.corpus_dir.clone().unwrap_or_else(|| self.output_dir.join("corpus"))
    }

    pub fn graph_path(&self) -> PathBuf {
        self.graph.clone().unwrap_or_else(|| self.output_dir.join("graph.json"))
    }

    pub fn agent_config(&self, mode: AgentMode) -> Result<AgentConfig, CliError> {
        AgentConfig::new(mode, self.agent.replan_period, self.agent.horizon, self.agent.termination)
            .map_err(|e| CliError::Data(e.to_string()))
    }

    /// Test-split suite; the validation suite uses the next seed.
    pub fn suite_params(&self, seed_offset: u64) -> SuiteParams {
        SuiteParams {
            episodes_total: self.suite.episodes,
            min_per_bucket: self.suite.min_per_bucket,
            max_attempts: self.suite.max_attempts,
            seed: self.seed.wrapping_add(seed_offset),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_takes_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "agent": {"horizon": 300}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.agent.horizon, 300);
        assert_eq!(c.agent.replan_period, DEFAULT_REPLAN_PERIOD);
        assert_eq!(c.corpus, CorpusSettings::default());
        c.validate().unwrap();
    }

    #[test]
    fn seed_is_required_and_typos_rejected() {
        assert!(serde_json::from_str::<RunConfig>("{}").is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "horizon": 3}"#).is_err());
    }

    #[test]
    fn roundtrip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
