//! Machine-readable run reports: per-tournament results, final ledger
//! summary, and invariant check outcomes. A report can be regenerated from
//! the event log alone and must come out byte-identical.

use serde::{Deserialize, Serialize};

use crate::codec::Digest;
use crate::crypto::{AccountId, KeyPair};
use crate::ledger::Amount;
use crate::score::Score;
use crate::sim::{run_scenario, LogLine, Scenario, ScenarioError, SimOutcome};
use crate::app::AppEvent;
use crate::tournament::DisqReason;
use crate::tx::Uuid;

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TournamentReport {
    pub index: u64,
    /// "resolved" or "failed".
    pub outcome: String,
    pub ranking: Vec<(Uuid, Score)>,
    pub payouts: Vec<(AccountId, Amount)>,
    pub refunds: Vec<(AccountId, Amount)>,
    pub disqualified_miners: Vec<(AccountId, DisqReason)>,
    pub disqualified_challengers: Vec<(AccountId, DisqReason)>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub scenario: String,
    pub scenario_digest: Digest,
    pub blocks: u64,
    pub tournaments: Vec<TournamentReport>,
    /// Final spendable balance per node, by scenario name.
    pub final_balances: Vec<(String, Amount)>,
    pub final_stakes: Vec<(String, Amount)>,
    pub current_reward_pool: Amount,
    pub next_reward_pool: Amount,
    pub total_supply: Amount,
    pub conserved: bool,
    pub digests_agree: bool,
    pub final_digest: Digest,
    pub violations: Vec<String>,
    pub event_log: String,
}

impl RunReport {
    pub fn from_outcome(scenario: &Scenario, outcome: &SimOutcome, event_log: &str) -> RunReport {
        let mut tournaments = Vec::new();
        for (_, event) in &outcome.events {
            match event {
                AppEvent::TournamentResolved {
                    index,
                    ranking,
                    payouts,
                    disqualified_miners,
                    disqualified_challengers,
                } => tournaments.push(TournamentReport {
                    index: *index,
                    outcome: "resolved".to_string(),
                    ranking: ranking.clone(),
                    payouts: payouts.clone(),
                    refunds: Vec::new(),
                    disqualified_miners: disqualified_miners.clone(),
                    disqualified_challengers: disqualified_challengers.clone(),
                }),
                AppEvent::TournamentFailed {
                    index,
                    refunds,
                    disqualified_challengers,
                } => tournaments.push(TournamentReport {
                    index: *index,
                    outcome: "failed".to_string(),
                    ranking: Vec::new(),
                    payouts: Vec::new(),
                    refunds: refunds.clone(),
                    disqualified_miners: Vec::new(),
                    disqualified_challengers: disqualified_challengers.clone(),
                }),
                _ => {}
            }
        }
        let ledger = &outcome.final_state.ledger;
        let mut final_balances = Vec::new();
        let mut final_stakes = Vec::new();
        for spec in &scenario.nodes {
            let account = KeyPair::from_seed(&[spec.key_seed; 32]).account();
            final_balances.push((spec.name.clone(), ledger.balance(&account)));
            let staked = ledger.stakes.get(&account).map(|s| s.amount).unwrap_or(0);
            final_stakes.push((spec.name.clone(), staked));
        }
        RunReport {
            scenario: scenario.name.clone(),
            scenario_digest: scenario.digest(),
            blocks: outcome.blocks,
            tournaments,
            final_balances,
            final_stakes,
            current_reward_pool: ledger.current_reward_pool,
            next_reward_pool: ledger.next_reward_pool,
            total_supply: ledger.total_supply,
            conserved: ledger.conservation_holds(),
            digests_agree: outcome.digests.iter().all(|d| *d == outcome.digests[0]),
            final_digest: outcome.digests[0],
            violations: outcome.violations.clone(),
            event_log: event_log.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// The scenario embedded in a log's first line.
pub fn scenario_from_log(log: &[String]) -> Option<Scenario> {
    let first = log.first()?;
    match serde_json::from_str(first) {
        Ok(LogLine::Scenario { scenario }) => Some(scenario),
        _ => None,
    }
}

/// Rebuild a report from the event log alone, by re-running its scenario.
pub fn report_from_log(log: &[String], event_log: &str) -> Result<RunReport, ScenarioError> {
    let scenario = scenario_from_log(log)
        .ok_or_else(|| ScenarioError::Invalid("log has no scenario header".to_string()))?;
    let outcome = run_scenario(&scenario, false)?;
    Ok(RunReport::from_outcome(&scenario, &outcome, event_log))
}
