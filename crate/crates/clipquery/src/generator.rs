//! Generation requests for highway datasets.

use std::path::Path;

use clipquery_core::highway::{self, Driver, FaultySpec, HighwayError, HighwayState, Policy, TrafficConfig};
use clipquery_core::Dataset;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("give exactly one of `policy` and `faulty`")]
    PolicyChoice,
    #[error("episodes and steps must be positive")]
    Empty,
    #[error("{0} steps requested, the limit is {1}")]
    TooLarge(usize, usize),
    #[error("unknown faulty preset `{0}` (expected plain-toplane or plain-collision)")]
    UnknownPreset(String),
    #[error(transparent)]
    Highway(#[from] HighwayError),
}

pub const MAX_TOTAL_STEPS: usize = 2_000_000;

fn default_episodes() -> usize {
    100
}

fn default_steps() -> usize {
    200
}

/// Everything that determines a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Driver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faulty: Option<FaultySpec>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub traffic: TrafficConfig,
}

impl GenerateSpec {
    pub fn single(driver: Driver, episodes: usize, steps: usize, seed: u64) -> Self {
        GenerateSpec {
            policy: Some(driver),
            faulty: None,
            episodes,
            steps,
            seed,
            traffic: TrafficConfig::default(),
        }
    }

    pub fn faulty(spec: FaultySpec, episodes: usize, steps: usize, seed: u64) -> Self {
        GenerateSpec {
            policy: None,
            faulty: Some(spec),
            ..GenerateSpec::single(Driver::Plain, episodes, steps, seed)
        }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.policy.is_some() == self.faulty.is_some() {
            return Err(GenerateError::PolicyChoice);
        }
        if self.episodes == 0 || self.steps == 0 {
            return Err(GenerateError::Empty);
        }
        let total = self.episodes.saturating_mul(self.steps);
        if total > MAX_TOTAL_STEPS {
            return Err(GenerateError::TooLarge(total, MAX_TOTAL_STEPS));
        }
        self.traffic.validate()?;
        Ok(())
    }

    pub fn policy(&self) -> Result<Policy, GenerateError> {
        self.validate()?;
        let vocab = highway::vocabulary_for(self.traffic.lanes, &Default::default());
        match (&self.policy, &self.faulty) {
            (Some(d), None) => Ok(Policy::single(*d)),
            (None, Some(f)) => Ok(highway::make_faulty(f.clone(), &vocab)?),
            _ => Err(GenerateError::PolicyChoice),
        }
    }

    /// Dataset id derived from the request content.
    pub fn content_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let digest = hex::encode(Sha256::digest(&bytes));
        format!("ds-{}", &digest[..16])
    }

    pub fn run(&self) -> Result<Dataset<HighwayState>, GenerateError> {
        let policy = self.policy()?;
        Ok(highway::generate(
            &policy,
            self.episodes,
            self.steps,
            self.seed,
            &self.traffic,
        )?)
    }
}

/// `plain-toplane`, `plain-collision`, or a path to a JSON `FaultySpec`.
pub fn faulty_from_arg(arg: &str) -> Result<FaultySpec, anyhow::Error> {
    match arg {
        "plain-toplane" => Ok(FaultySpec::plain_toplane()),
        "plain-collision" => Ok(FaultySpec::plain_collision()),
        path if Path::new(path).is_file() => {
            let text = std::fs::read_to_string(path)?;
            Ok(serde_json::from_str(&text)?)
        }
        other => Err(GenerateError::UnknownPreset(other.to_string()).into()),
    }
}
