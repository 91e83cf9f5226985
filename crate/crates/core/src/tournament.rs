//! Tournament lifecycle: signal and dataset bookkeeping, evidence-based
//! disqualification, local ranking computation for both domain types, the
//! reward split, and the failure/refund rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blob::BlobStore;
use crate::codec::{digest_bytes, Canon, Enc};
use crate::config::{ProblemType, ValidatedConfig};
use crate::consensus::ChallengerSet;
use crate::crypto::{open, AccountId, SealedEnvelope, SignalPayload};
use crate::ledger::{Amount, FeeReceipt, LedgerState};
use crate::score::Score;
use crate::toy::{accuracy, TruthStream};
use crate::tx::Uuid;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Phase {
    /// Agents are registering; the window has not started yet.
    Pending,
    Active,
    AwaitingReveals,
    Resolved,
    Failed,
}

impl Phase {
    fn tag(&self) -> u8 {
        match self {
            Phase::Pending => 0,
            Phase::Active => 1,
            Phase::AwaitingReveals => 2,
            Phase::Resolved => 3,
            Phase::Failed => 4,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum DisqReason {
    MissedSignal,
    MissedReveal,
    MissedDataset,
    BadCommit,
    AuthorMismatch,
    CorruptDataset,
}

impl DisqReason {
    fn tag(&self) -> u8 {
        match self {
            DisqReason::MissedSignal => 1,
            DisqReason::MissedReveal => 2,
            DisqReason::MissedDataset => 3,
            DisqReason::BadCommit => 4,
            DisqReason::AuthorMismatch => 5,
            DisqReason::CorruptDataset => 6,
        }
    }
}

impl Canon for DisqReason {
    fn encode(&self, e: &mut Enc) {
        e.u8(self.tag());
    }
}

/// Key for a committed signal: the agent, and the tick for real-time
/// domains (`None` in dataset domains).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct SignalKey {
    pub agent: Uuid,
    pub tick: Option<u64>,
}

impl Canon for SignalKey {
    fn encode(&self, e: &mut Enc) {
        self.agent.encode(e);
        e.opt_u64(self.tick);
    }
}

/// A challenger's published dataset commitment.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DatasetCommit {
    pub inputs_ref: crate::codec::Digest,
    pub inputs_hash: crate::codec::Digest,
    pub encrypted_signals_ref: crate::codec::Digest,
    pub signals_hash: crate::codec::Digest,
    pub revealed_key: Option<[u8; 32]>,
}

impl Canon for DatasetCommit {
    fn encode(&self, e: &mut Enc) {
        self.inputs_ref.encode(e);
        self.inputs_hash.encode(e);
        self.encrypted_signals_ref.encode(e);
        self.signals_hash.encode(e);
        match &self.revealed_key {
            None => e.u8(0),
            Some(k) => {
                e.u8(1);
                e.raw(k);
            }
        }
    }
}

/// Final ranking: non-disqualified agents sorted by score descending,
/// ties broken by submission time then uuid bytes.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct Ranking(pub Vec<(Uuid, Score)>);

impl Canon for Ranking {
    fn encode(&self, e: &mut Enc) {
        e.count(self.0.len());
        for (uuid, score) in &self.0 {
            uuid.encode(e);
            score.encode(e);
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TournamentState {
    pub index: u64,
    pub phase: Phase,
    /// agent uuid -> owning miner.
    pub participants: BTreeMap<Uuid, AccountId>,
    /// agent uuid -> submit_agent application time, for tie-breaking.
    pub submitted_at: BTreeMap<Uuid, u64>,
    /// Dataset domains only.
    pub challengers: Option<ChallengerSet>,
    pub datasets: BTreeMap<AccountId, DatasetCommit>,
    pub envelopes: BTreeMap<SignalKey, SealedEnvelope>,
    pub revealed_keys: BTreeMap<SignalKey, [u8; 32]>,
    /// (owner, key) pairs consumed by accepted reveals; the same account
    /// revealing the same key again is invalid. Keyed per account so a
    /// copied key still leaves author-mismatch evidence on chain.
    pub used_keys: BTreeSet<(AccountId, [u8; 32])>,
    pub disq_miners: BTreeMap<AccountId, DisqReason>,
    pub disq_challengers: BTreeMap<AccountId, DisqReason>,
    /// This tournament's reward pool and the receipts backing it.
    pub pool: Amount,
    pub fee_receipts: Vec<FeeReceipt>,
    pub result: Option<Ranking>,
    pub payouts: Vec<(AccountId, Amount)>,
    pub refunds: Vec<(AccountId, Amount)>,
}

impl TournamentState {
    pub fn pending(index: u64) -> TournamentState {
        TournamentState {
            index,
            phase: Phase::Pending,
            participants: BTreeMap::new(),
            submitted_at: BTreeMap::new(),
            challengers: None,
            datasets: BTreeMap::new(),
            envelopes: BTreeMap::new(),
            revealed_keys: BTreeMap::new(),
            used_keys: BTreeSet::new(),
            disq_miners: BTreeMap::new(),
            disq_challengers: BTreeMap::new(),
            pool: 0,
            fee_receipts: Vec::new(),
            result: None,
            payouts: Vec::new(),
            refunds: Vec::new(),
        }
    }

    /// Accounts mining in this tournament.
    pub fn participating_miners(&self) -> BTreeSet<AccountId> {
        self.participants.values().copied().collect()
    }

    pub fn is_resolved(&self) -> bool {
        matches!(self.phase, Phase::Resolved | Phase::Failed)
    }
}

impl Canon for TournamentState {
    fn encode(&self, e: &mut Enc) {
        e.u64(self.index);
        e.u8(self.phase.tag());
        self.participants.encode(e);
        self.submitted_at.encode(e);
        match &self.challengers {
            None => e.u8(0),
            Some(c) => {
                e.u8(1);
                c.encode(e);
            }
        }
        self.datasets.encode(e);
        self.envelopes.encode(e);
        e.count(self.revealed_keys.len());
        for (k, key) in &self.revealed_keys {
            k.encode(e);
            e.raw(key);
        }
        e.count(self.used_keys.len());
        for (owner, key) in &self.used_keys {
            owner.encode(e);
            e.raw(key);
        }
        self.disq_miners.encode(e);
        self.disq_challengers.encode(e);
        e.u64(self.pool);
        self.fee_receipts.encode(e);
        match &self.result {
            None => e.u8(0),
            Some(r) => {
                e.u8(1);
                r.encode(e);
            }
        }
        self.payouts.encode(e);
        self.refunds.encode(e);
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("no valid challenger datasets remain")]
    NoValidDatasets,
}

/// Fraction of ticks predicted correctly. Signals must cover every tick;
/// a gap means the miner was already disqualified upstream.
pub fn score_realtime(predictions: &BTreeMap<u64, bool>, actuals: &BTreeMap<u64, bool>) -> Score {
    let total = actuals.len() as u64;
    let correct = actuals
        .iter()
        .filter(|(tick, truth)| predictions.get(tick) == Some(truth))
        .count() as u64;
    Score::new(correct, total.max(1))
}

/// Mean accuracy across the surviving challenger datasets.
pub fn score_dataset(per_dataset: &[Score]) -> Result<Score, ScoreError> {
    if per_dataset.is_empty() {
        return Err(ScoreError::NoValidDatasets);
    }
    Ok(Score::mean(per_dataset))
}

/// External facts needed to score a tournament: the real-time truth stream
/// and the blob store holding dataset contents.
pub struct ScoringContext<'a> {
    pub truth: Option<TruthStream>,
    pub blobs: &'a BlobStore,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ResolutionOutcome {
    Ranking(Ranking),
    Failure,
}

/// Deterministic resolution of a tournament: the full disqualification
/// sets (recorded evidence plus deadline-derived marks) and either the
/// ranking or the failure verdict. Every input is chain state or config,
/// so all honest nodes compute the same value.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Resolution {
    pub disq_miners: BTreeMap<AccountId, DisqReason>,
    pub disq_challengers: BTreeMap<AccountId, DisqReason>,
    pub outcome: ResolutionOutcome,
}

pub fn resolve(
    t: &TournamentState,
    cfg: &ValidatedConfig,
    ctx: &ScoringContext<'_>,
) -> Resolution {
    let mut disq_miners = t.disq_miners.clone();
    let mut disq_challengers = t.disq_challengers.clone();

    // Challenger validity and dataset truths (dataset domains).
    let mut truths: BTreeMap<AccountId, Vec<bool>> = BTreeMap::new();
    if let Some(set) = &t.challengers {
        for member in &set.members {
            if disq_challengers.contains_key(member) {
                continue;
            }
            let Some(commit) = t.datasets.get(member) else {
                disq_challengers.insert(*member, DisqReason::MissedDataset);
                continue;
            };
            let Some(key) = commit.revealed_key else {
                disq_challengers.insert(*member, DisqReason::MissedReveal);
                continue;
            };
            match challenger_truths(commit, &key, ctx.blobs) {
                Some(outputs) => {
                    truths.insert(*member, outputs);
                }
                None => {
                    disq_challengers.insert(*member, DisqReason::CorruptDataset);
                }
            }
        }
        if challenger_failure(set, &disq_challengers) {
            return Resolution {
                disq_miners,
                disq_challengers,
                outcome: ResolutionOutcome::Failure,
            };
        }
    }

    // Miner validity and per-agent predictions.
    let required_ticks: Vec<u64> = match cfg.problem_type {
        ProblemType::RealTime => cfg.realtime_ticks(t.index).unwrap_or_default(),
        ProblemType::Dataset => Vec::new(),
    };
    let mut agent_preds: BTreeMap<Uuid, AgentPredictions> = BTreeMap::new();
    for (agent, owner) in &t.participants {
        if disq_miners.contains_key(owner) {
            continue;
        }
        match cfg.problem_type {
            ProblemType::RealTime => {
                let mut per_tick = BTreeMap::new();
                let mut failure: Option<DisqReason> = None;
                for tick in &required_ticks {
                    let key = SignalKey {
                        agent: *agent,
                        tick: Some(*tick),
                    };
                    match opened_signal(t, &key, owner) {
                        Ok(payload) => {
                            per_tick.insert(*tick, !payload.signal.is_empty() && payload.signal[0] != 0);
                        }
                        Err(reason) => {
                            failure = Some(reason);
                            break;
                        }
                    }
                }
                match failure {
                    Some(reason) => {
                        disq_miners.insert(*owner, reason);
                    }
                    None => {
                        agent_preds.insert(*agent, AgentPredictions::PerTick(per_tick));
                    }
                }
            }
            ProblemType::Dataset => {
                let key = SignalKey {
                    agent: *agent,
                    tick: None,
                };
                match opened_signal(t, &key, owner) {
                    Ok(payload) => match decode_dataset_signal(&payload.signal) {
                        Some(preds) => {
                            agent_preds.insert(*agent, AgentPredictions::PerChallenger(preds));
                        }
                        None => {
                            disq_miners.insert(*owner, DisqReason::BadCommit);
                        }
                    },
                    Err(reason) => {
                        disq_miners.insert(*owner, reason);
                    }
                }
            }
        }
    }

    // Score the survivors.
    let mut scored: Vec<(Uuid, Score)> = Vec::new();
    for (agent, preds) in &agent_preds {
        let owner = &t.participants[agent];
        if disq_miners.contains_key(owner) {
            continue;
        }
        let score = match preds {
            AgentPredictions::PerTick(per_tick) => {
                let actuals: BTreeMap<u64, bool> = match &ctx.truth {
                    Some(stream) => required_ticks.iter().map(|t| (*t, stream.outcome(*t))).collect(),
                    None => BTreeMap::new(),
                };
                if actuals.is_empty() {
                    continue;
                }
                score_realtime(per_tick, &actuals)
            }
            AgentPredictions::PerChallenger(preds) => {
                let per_dataset: Vec<Score> = truths
                    .iter()
                    .map(|(challenger, truth)| {
                        preds
                            .get(challenger)
                            .and_then(|p| accuracy(p, truth).ok())
                            .unwrap_or(Score::ZERO)
                    })
                    .collect();
                match score_dataset(&per_dataset) {
                    Ok(s) => s,
                    Err(ScoreError::NoValidDatasets) => continue,
                }
            }
        };
        scored.push((*agent, score));
    }
    scored.sort_by(|(ua, sa), (ub, sb)| {
        sb.cmp(sa)
            .then_with(|| t.submitted_at.get(ua).cmp(&t.submitted_at.get(ub)))
            .then_with(|| ua.0.cmp(&ub.0))
    });

    Resolution {
        disq_miners,
        disq_challengers,
        outcome: ResolutionOutcome::Ranking(Ranking(scored)),
    }
}

enum AgentPredictions {
    PerTick(BTreeMap<u64, bool>),
    PerChallenger(BTreeMap<AccountId, Vec<bool>>),
}

/// Open a committed signal with its revealed key and verify authorship.
fn opened_signal(
    t: &TournamentState,
    key: &SignalKey,
    owner: &AccountId,
) -> Result<SignalPayload, DisqReason> {
    let envelope = t.envelopes.get(key).ok_or(DisqReason::MissedSignal)?;
    let reveal = t.revealed_keys.get(key).ok_or(DisqReason::MissedReveal)?;
    let payload = open(envelope, reveal).map_err(|_| DisqReason::BadCommit)?;
    let payload = SignalPayload::from_bytes(&payload).ok_or(DisqReason::BadCommit)?;
    if payload.author() != *owner {
        return Err(DisqReason::AuthorMismatch);
    }
    Ok(payload)
}

/// Decrypt and verify one challenger's dataset outputs.
fn challenger_truths(
    commit: &DatasetCommit,
    key: &[u8; 32],
    blobs: &BlobStore,
) -> Option<Vec<bool>> {
    let inputs = blobs.get(&commit.inputs_ref)?;
    if digest_bytes(inputs) != commit.inputs_hash {
        return None;
    }
    let sealed = blobs.get(&commit.encrypted_signals_ref)?;
    let envelope = SealedEnvelope::from_wire(sealed).ok()?;
    let plaintext = open(&envelope, key).ok()?;
    if digest_bytes(&plaintext) != commit.signals_hash {
        return None;
    }
    crate::toy::ToyDataset::outputs_from_bytes(&plaintext)
}

/// Failure rule: disqualified challengers hold at least half of the
/// challenger power (selection-time snapshot).
pub fn challenger_failure(
    set: &ChallengerSet,
    disq: &BTreeMap<AccountId, DisqReason>,
) -> bool {
    let total = set.total_power();
    let disq_power: u128 = disq.keys().map(|a| set.power_of(a)).sum();
    disq_power * 2 >= total && total > 0
}

/// Encode per-challenger predictions as a dataset-domain signal body.
pub fn encode_dataset_signal(preds: &BTreeMap<AccountId, Vec<bool>>) -> Vec<u8> {
    let mut e = Enc::new();
    preds.encode(&mut e);
    e.finish()
}

pub fn decode_dataset_signal(data: &[u8]) -> Option<BTreeMap<AccountId, Vec<bool>>> {
    let mut r = crate::crypto::WireReader(data);
    let n = u32::from_be_bytes(r.raw(4)?.try_into().ok()?) as usize;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let account = AccountId(crate::codec::Digest(r.raw(32)?.try_into().ok()?));
        let m = u32::from_be_bytes(r.raw(4)?.try_into().ok()?) as usize;
        let mut preds = Vec::with_capacity(m);
        for _ in 0..m {
            preds.push(match r.u8()? {
                0 => false,
                1 => true,
                _ => return None,
            });
        }
        out.insert(account, preds);
    }
    if !r.0.is_empty() {
        return None;
    }
    Some(out)
}

/// Split the reward pool per the protocol rules and credit the winners.
/// Integer-division remainders and unassignable shares go to the next
/// tournament's fund so conservation is exact. Returns the payouts.
pub fn distribute_reward(
    ledger: &mut LedgerState,
    t: &TournamentState,
    ranking: &Ranking,
    cfg: &ValidatedConfig,
) -> Vec<(AccountId, Amount)> {
    let pool = t.pool;
    let mut paid: Amount = 0;
    let mut payouts: Vec<(AccountId, Amount)> = Vec::new();
    let mut pay = |ledger: &mut LedgerState, to: &AccountId, amount: Amount| {
        if amount > 0 {
            ledger
                .pay_from_pool(to, amount)
                .expect("pool accounting is exact");
            payouts.push((*to, amount));
            paid += amount;
        }
    };

    // Dataset domains: the first third goes to the surviving challengers
    // in ratio of their selection-time power.
    let mut miner_pool = pool;
    if cfg.problem_type == ProblemType::Dataset {
        let challenger_share = pool / 3;
        miner_pool = pool - challenger_share;
        if let Some(set) = &t.challengers {
            let survivors: Vec<&AccountId> = set
                .members
                .iter()
                .filter(|m| !t.disq_challengers.contains_key(m))
                .collect();
            let total_power: u128 = survivors.iter().map(|m| set.power_of(m)).sum();
            if total_power > 0 {
                for member in survivors {
                    let amount = (challenger_share as u128 * set.power_of(member) / total_power)
                        as Amount;
                    pay(ledger, member, amount);
                }
            }
        }
    }

    // The rest goes to the miners behind the top three agents, 3:2:1.
    // With two survivors the split renormalizes to 3:2, with one the
    // whole miner pool goes to them.
    let top: Vec<&(Uuid, Score)> = ranking.0.iter().take(3).collect();
    let weights: &[Amount] = match top.len() {
        0 => &[],
        1 => &[1],
        2 => &[3, 2],
        _ => &[3, 2, 1],
    };
    let weight_sum: Amount = weights.iter().sum();
    for ((uuid, _), w) in top.iter().zip(weights) {
        let owner = t.participants[uuid];
        pay(ledger, &owner, miner_pool * w / weight_sum);
    }

    // Remainder (including the whole pool when no agents survived).
    ledger
        .return_to_next(pool - paid)
        .expect("remainder within pool");
    payouts
}

/// Refund the refundable fees behind a failed tournament and roll the
/// rest of its pool forward. Returns the refunds.
pub fn refund_failed(
    ledger: &mut LedgerState,
    t: &TournamentState,
) -> Vec<(AccountId, Amount)> {
    let mut refunds = Vec::new();
    let mut refunded: Amount = 0;
    for receipt in &t.fee_receipts {
        if receipt.kind.refundable() && receipt.amount > 0 {
            ledger
                .pay_from_pool(&receipt.payer, receipt.amount)
                .expect("receipts are backed by the pool");
            refunds.push((receipt.payer, receipt.amount));
            refunded += receipt.amount;
        }
    }
    ledger
        .return_to_next(t.pool - refunded)
        .expect("refunds within pool");
    refunds
}
