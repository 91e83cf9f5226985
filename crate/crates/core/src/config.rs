//! Domain configuration: the protocol parameters that schedule tournaments
//! and gate every timed rule. All timestamps and durations are integer
//! milliseconds since the UNIX epoch; the simulator supplies time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canon, Enc};

/// Exact fraction with positive denominator. Used wherever the protocol
/// needs a ratio without touching floats.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Ratio {
        Ratio { num, den }
    }

    pub fn is_valid_fraction(&self) -> bool {
        self.den > 0 && self.num > 0 && self.num <= self.den
    }
}

impl Canon for Ratio {
    fn encode(&self, e: &mut Enc) {
        e.u64(self.num);
        e.u64(self.den);
    }
}

pub const MS_PER_DAY: u64 = 86_400_000;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ProblemType {
    RealTime,
    Dataset,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DomainConfig {
    pub tournament_start_frequency: u64,
    pub proposer_deadline: u64,
    pub time_tolerance: u64,
    pub problem_type: ProblemType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_time_frequency: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_submission_deadline: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_agent_challengers: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_agent_challenger_voting_power: Option<Ratio>,
    pub agent_submission_fee: u64,
    pub data_publish_fee: u64,
    pub price_publish_fee: u64,
    pub rent_fee: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid config field: {0}")]
    Invalid(&'static str),
    #[error("operation requires the other problem type")]
    WrongDomainType,
}

/// A [`DomainConfig`] that passed [`DomainConfig::validate`].
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatedConfig(DomainConfig);

impl std::ops::Deref for ValidatedConfig {
    type Target = DomainConfig;
    fn deref(&self) -> &DomainConfig {
        &self.0
    }
}

impl DomainConfig {
    pub fn validate(self) -> Result<ValidatedConfig, ConfigError> {
        if self.tournament_start_frequency == 0 {
            return Err(ConfigError::Invalid("tournamentStartFrequency"));
        }
        if self.proposer_deadline == 0 {
            return Err(ConfigError::Invalid("proposerDeadline"));
        }
        match self.problem_type {
            ProblemType::RealTime => {
                let freq = self
                    .real_time_frequency
                    .ok_or(ConfigError::Invalid("realTimeFrequency"))?;
                if freq == 0 || self.tournament_start_frequency % freq != 0 {
                    return Err(ConfigError::Invalid("realTimeFrequency"));
                }
                if self.dataset_submission_deadline.is_some()
                    || self.min_agent_challengers.is_some()
                    || self.min_agent_challenger_voting_power.is_some()
                {
                    return Err(ConfigError::Invalid("datasetSubmissionDeadline"));
                }
            }
            ProblemType::Dataset => {
                if self.real_time_frequency.is_some() {
                    return Err(ConfigError::Invalid("realTimeFrequency"));
                }
                let deadline = self
                    .dataset_submission_deadline
                    .ok_or(ConfigError::Invalid("datasetSubmissionDeadline"))?;
                // A tournament must be able to complete within its window.
                if deadline + self.time_tolerance >= self.tournament_start_frequency {
                    return Err(ConfigError::Invalid("datasetSubmissionDeadline"));
                }
                match self.min_agent_challengers {
                    Some(n) if n >= 1 => {}
                    _ => return Err(ConfigError::Invalid("minAgentChallengers")),
                }
                match self.min_agent_challenger_voting_power {
                    Some(r) if r.is_valid_fraction() => {}
                    _ => return Err(ConfigError::Invalid("minAgentChallengerVotingPower")),
                }
            }
        }
        Ok(ValidatedConfig(self))
    }
}

impl ValidatedConfig {
    /// Validation is idempotent.
    pub fn revalidate(self) -> Result<ValidatedConfig, ConfigError> {
        self.0.validate()
    }

    /// Epoch-anchored tournament window `[start, end)`.
    pub fn tournament_window(&self, index: u64) -> (u64, u64) {
        let start = index * self.tournament_start_frequency;
        (start, start + self.tournament_start_frequency)
    }

    /// Index of the tournament whose window contains `now`.
    pub fn tournament_index(&self, now: u64) -> u64 {
        now / self.tournament_start_frequency
    }

    /// All real-time ticks in tournament `index`'s window, ascending.
    pub fn realtime_ticks(&self, index: u64) -> Result<Vec<u64>, ConfigError> {
        let freq = match self.problem_type {
            ProblemType::RealTime => self.real_time_frequency.unwrap_or(0),
            ProblemType::Dataset => return Err(ConfigError::WrongDomainType),
        };
        let (start, end) = self.tournament_window(index);
        Ok((start..end).step_by(freq as usize).collect())
    }

    /// Symmetric latency tolerance for timed transactions.
    pub fn within_tolerance(&self, deadline: u64, observed: u64) -> bool {
        deadline.abs_diff(observed) <= self.time_tolerance
    }
}

impl Canon for ValidatedConfig {
    fn encode(&self, e: &mut Enc) {
        e.u64(self.tournament_start_frequency);
        e.u64(self.proposer_deadline);
        e.u64(self.time_tolerance);
        e.u8(match self.problem_type {
            ProblemType::RealTime => 0,
            ProblemType::Dataset => 1,
        });
        e.opt_u64(self.real_time_frequency);
        e.opt_u64(self.dataset_submission_deadline);
        e.opt_u64(self.min_agent_challengers);
        match self.min_agent_challenger_voting_power {
            None => e.u8(0),
            Some(r) => {
                e.u8(1);
                r.encode(e);
            }
        }
        e.u64(self.agent_submission_fee);
        e.u64(self.data_publish_fee);
        e.u64(self.price_publish_fee);
        e.u64(self.rent_fee);
    }
}

#[cfg(test)]
pub(crate) fn realtime_test_config(freq: u64, tick: u64, tolerance: u64) -> ValidatedConfig {
    DomainConfig {
        tournament_start_frequency: freq,
        proposer_deadline: 10_000,
        time_tolerance: tolerance,
        problem_type: ProblemType::RealTime,
        real_time_frequency: Some(tick),
        dataset_submission_deadline: None,
        min_agent_challengers: None,
        min_agent_challenger_voting_power: None,
        agent_submission_fee: 10,
        data_publish_fee: 5,
        price_publish_fee: 3,
        rent_fee: 2,
    }
    .validate()
    .unwrap()
}

#[cfg(test)]
pub(crate) fn dataset_test_config(
    freq: u64,
    deadline: u64,
    tolerance: u64,
    min_challengers: u64,
    min_power: Ratio,
) -> ValidatedConfig {
    DomainConfig {
        tournament_start_frequency: freq,
        proposer_deadline: 10_000,
        time_tolerance: tolerance,
        problem_type: ProblemType::Dataset,
        real_time_frequency: None,
        dataset_submission_deadline: Some(deadline),
        min_agent_challengers: Some(min_challengers),
        min_agent_challenger_voting_power: Some(min_power),
        agent_submission_fee: 10,
        data_publish_fee: 5,
        price_publish_fee: 3,
        rent_fee: 2,
    }
    .validate()
    .unwrap()
}
