use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HouseError;
use crate::concepts::{ConceptId, ConfidenceVector, DEFAULT_THRESHOLD};

/// Parametric stand-in for a room-type classifier.
///
/// Per step, the true concept scores in `[0.9, 1]` with probability
/// `hit_rate` (otherwise in `[0, 0.9)`), and every other concept
/// independently scores in `[0.9, 1]` with probability `false_alarm_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorModel {
    pub hit_rate: f64,
    pub false_alarm_rate: f64,
}

impl DetectorModel {
    pub fn new(hit_rate: f64, false_alarm_rate: f64) -> Result<Self, HouseError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(hit_rate) || !unit(false_alarm_rate) || hit_rate <= false_alarm_rate {
            return Err(HouseError::Invalid(format!(
                "detector needs 0 <= false_alarm_rate ({false_alarm_rate}) < hit_rate ({hit_rate}) <= 1"
            )));
        }
        Ok(Self { hit_rate, false_alarm_rate })
    }

    pub fn validated(self) -> Result<Self, HouseError> {
        Self::new(self.hit_rate, self.false_alarm_rate)
    }

    pub fn noiseless() -> Self {
        Self { hit_rate: 1.0, false_alarm_rate: 0.0 }
    }

    pub fn emit(&self, truth: Option<ConceptId>, concepts: usize, rng: &mut impl Rng) -> ConfidenceVector {
        let scores = (0..concepts)
            .map(|i| {
                let p = if truth == Some(ConceptId(i)) { self.hit_rate } else { self.false_alarm_rate };
                if rng.gen::<f64>() < p {
                    rng.gen_range(DEFAULT_THRESHOLD..=1.0)
                } else {
                    rng.gen_range(0.0..DEFAULT_THRESHOLD)
                }
            })
            .collect();
        ConfidenceVector::new(scores).expect("scores drawn inside [0, 1]")
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { hit_rate: 0.95, false_alarm_rate: 0.01 }
    }
}
