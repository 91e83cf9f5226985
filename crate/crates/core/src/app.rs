//! The replicated application state machine: validity and effects of every
//! transaction kind, tournament boundary processing, and the state digest
//! nodes compare when voting.
//!
//! All timed validity is judged against the block timestamp, never wall
//! clocks, so every replica reaches the same verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blob::BlobStore;
use crate::codec::{digest_of, Canon, Digest, Enc};
use crate::config::{ProblemType, ValidatedConfig};
use crate::consensus::{select_challengers, SelectionSeed};
use crate::crypto::{open, AccountId, EnvelopeError};
use crate::ledger::{Amount, FeeKind, LedgerState};
use crate::score::Score;
use crate::tournament::{
    distribute_reward, refund_failed, resolve, DatasetCommit, DisqReason, Phase, Ranking,
    Resolution, ResolutionOutcome, ScoringContext, SignalKey, TournamentState,
};
use crate::toy::TruthStream;
use crate::tx::{PaymentScheme, Transaction, TxBody, Uuid};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum TxError {
    #[error("bad signature or sender key")]
    BadSignature,
    #[error("sequence number out of order")]
    BadSequence,
    #[error("agent uuid already registered")]
    DuplicateAgent,
    #[error("unknown agent")]
    UnknownAgent,
    #[error("sender does not own this agent")]
    NotOwner,
    #[error("sender is not a selected challenger")]
    NotChallenger,
    #[error("operation does not apply to this problem type")]
    WrongDomainType,
    #[error("outside the transaction's validity window")]
    OutsideWindow,
    #[error("duplicate submission")]
    Duplicate,
    #[error("no committed signal to reveal")]
    UnknownSignal,
    #[error("decryption key already used this tournament")]
    KeyReused,
    #[error("revealed key does not decrypt the envelope")]
    DecryptFailed,
    #[error("sender is not the block proposer")]
    NotProposer,
    #[error("no tournament resolution is due")]
    NothingToResolve,
    #[error("published verdict does not match the computed resolution")]
    WrongVerdict,
    #[error("agent was not ranked in a successful tournament")]
    NotRanked,
    #[error("sender has no successful challenger record")]
    NotEligible,
    #[error("no such listing")]
    UnknownListing,
    #[error("transaction would not change state")]
    NoEffect,
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("token arithmetic overflow")]
    Overflow,
    #[error("missing or malformed tick")]
    BadTick,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ListingKind {
    Agent,
    Data,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Listing {
    pub seller: AccountId,
    pub kind: ListingKind,
    pub scheme: PaymentScheme,
    pub price: Amount,
}

impl Canon for Listing {
    fn encode(&self, e: &mut Enc) {
        self.seller.encode(e);
        e.u8(match self.kind {
            ListingKind::Agent => 0,
            ListingKind::Data => 1,
        });
        e.u8(match self.scheme {
            PaymentScheme::PerUse => 1,
            PaymentScheme::Subscription => 2,
            PaymentScheme::Buyout => 3,
        });
        e.u64(self.price);
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AgentRecord {
    pub owner: AccountId,
    /// Tournament the agent competes in.
    pub tournament: u64,
    pub registered_at: u64,
}

impl Canon for AgentRecord {
    fn encode(&self, e: &mut Enc) {
        self.owner.encode(e);
        e.u64(self.tournament);
        e.u64(self.registered_at);
    }
}

/// Out-of-band context a transaction needs at apply time: the block
/// timestamp, who proposed the block, and where scoring inputs live.
pub struct ApplyCtx<'a> {
    pub now: u64,
    pub proposer: AccountId,
    pub truth: Option<TruthStream>,
    pub blobs: &'a BlobStore,
}

impl<'a> ApplyCtx<'a> {
    fn scoring(&self) -> ScoringContext<'a> {
        ScoringContext {
            truth: self.truth,
            blobs: self.blobs,
        }
    }
}

/// State-change events, one stream entry per observable effect. The
/// simulator writes these to the run log.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "event")]
pub enum AppEvent {
    AgentRegistered {
        agent: Uuid,
        owner: AccountId,
        tournament: u64,
    },
    TournamentStarted {
        index: u64,
        pool: Amount,
        agents: u64,
    },
    ChallengersSelected {
        index: u64,
        members: Vec<AccountId>,
    },
    DatasetPublished {
        tournament: u64,
        challenger: AccountId,
    },
    SignalCommitted {
        tournament: u64,
        agent: Uuid,
        tick: Option<u64>,
    },
    DatasetKeyRevealed {
        tournament: u64,
        challenger: AccountId,
    },
    SignalKeyRevealed {
        tournament: u64,
        agent: Uuid,
        tick: Option<u64>,
    },
    TournamentResolved {
        index: u64,
        ranking: Vec<(Uuid, Score)>,
        payouts: Vec<(AccountId, Amount)>,
        disqualified_miners: Vec<(AccountId, DisqReason)>,
        disqualified_challengers: Vec<(AccountId, DisqReason)>,
    },
    TournamentFailed {
        index: u64,
        refunds: Vec<(AccountId, Amount)>,
        disqualified_challengers: Vec<(AccountId, DisqReason)>,
    },
    PricePublished {
        uuid: Uuid,
        seller: AccountId,
        price: Amount,
    },
    Rented {
        uuid: Uuid,
        renter: AccountId,
        seller: AccountId,
        cost: Amount,
    },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AppState {
    pub cfg: ValidatedConfig,
    pub ledger: LedgerState,
    /// Timestamp up to which boundary processing has run.
    pub clock: u64,
    pub next_seq: BTreeMap<AccountId, u64>,
    pub agents: BTreeMap<Uuid, AgentRecord>,
    pub listings: BTreeMap<Uuid, Listing>,
    pub tournaments: BTreeMap<u64, TournamentState>,
}

impl Canon for AppState {
    fn encode(&self, e: &mut Enc) {
        self.cfg.encode(e);
        self.ledger.encode(e);
        e.u64(self.clock);
        self.next_seq.encode(e);
        self.agents.encode(e);
        self.listings.encode(e);
        self.tournaments.encode(e);
    }
}

impl AppState {
    pub fn genesis(
        cfg: ValidatedConfig,
        allocations: &BTreeMap<AccountId, Amount>,
        stakes: &BTreeMap<AccountId, (Amount, u64)>,
    ) -> Result<AppState, crate::ledger::LedgerError> {
        let ledger = LedgerState::genesis(allocations, stakes)?;
        let mut tournaments = BTreeMap::new();
        let mut zero = TournamentState::pending(0);
        zero.phase = Phase::Active;
        tournaments.insert(0, zero);
        Ok(AppState {
            cfg,
            ledger,
            clock: 0,
            next_seq: BTreeMap::new(),
            agents: BTreeMap::new(),
            listings: BTreeMap::new(),
            tournaments,
        })
    }

    /// Digest of the full replicated state; nodes compare these when voting.
    pub fn digest(&self) -> Digest {
        digest_of(self)
    }

    pub fn expected_sequence(&self, account: &AccountId) -> u64 {
        self.next_seq.get(account).copied().unwrap_or(0)
    }

    /// Advance the state clock to `now`, processing every tournament
    /// boundary crossed on the way: the old tournament stops accepting
    /// signals, pools rotate into the starting tournament, and dataset
    /// domains select their challengers. `seed` is the previous block's
    /// digest, which anchors the selection randomness to the chain.
    pub fn advance(&mut self, now: u64, seed: &Digest) -> Vec<AppEvent> {
        let mut events = Vec::new();
        let freq = self.cfg.tournament_start_frequency;
        loop {
            let boundary = (self.clock / freq + 1) * freq;
            if boundary > now {
                break;
            }
            let index = boundary / freq;
            events.extend(self.start_tournament(index, seed));
            self.clock = boundary;
        }
        self.clock = now.max(self.clock);
        events
    }

    fn start_tournament(&mut self, index: u64, seed: &Digest) -> Vec<AppEvent> {
        let mut events = Vec::new();
        if let Some(prev) = self.tournaments.get_mut(&(index - 1)) {
            if prev.phase == Phase::Active {
                if prev.participants.is_empty() {
                    // Nothing competed: resolve trivially and roll the pool
                    // into the tournament starting now.
                    prev.phase = Phase::Resolved;
                    prev.result = Some(Ranking::default());
                    let (idx, pool) = (prev.index, prev.pool);
                    self.ledger
                        .return_to_next(pool)
                        .expect("empty tournament pool is intact");
                    events.push(AppEvent::TournamentResolved {
                        index: idx,
                        ranking: Vec::new(),
                        payouts: Vec::new(),
                        disqualified_miners: Vec::new(),
                        disqualified_challengers: Vec::new(),
                    });
                } else {
                    prev.phase = Phase::AwaitingReveals;
                }
            }
        }
        let (pool, receipts) = self.ledger.rotate_pools();
        let t = self
            .tournaments
            .entry(index)
            .or_insert_with(|| TournamentState::pending(index));
        t.phase = Phase::Active;
        t.pool = pool;
        t.fee_receipts = receipts;
        events.push(AppEvent::TournamentStarted {
            index,
            pool,
            agents: t.participants.len() as u64,
        });
        if self.cfg.problem_type == ProblemType::Dataset && !t.participants.is_empty() {
            let miners = t.participating_miners();
            let powers = self.ledger.powers(self.clock);
            let selection = select_challengers(
                &powers,
                SelectionSeed::new(seed, index, "challengers", 0),
                self.cfg.min_agent_challengers.unwrap_or(1),
                self.cfg
                    .min_agent_challenger_voting_power
                    .unwrap_or(crate::config::Ratio::new(1, u64::MAX)),
                &miners,
            );
            let t = self.tournaments.get_mut(&index).unwrap();
            match selection {
                Ok(set) => {
                    events.push(AppEvent::ChallengersSelected {
                        index,
                        members: set.members.clone(),
                    });
                    t.challengers = Some(set);
                }
                Err(_) => {
                    // Can't field a valid challenger set: the tournament
                    // fails on the spot and refundable fees go back.
                    t.phase = Phase::Failed;
                    let t = self.tournaments.get(&index).unwrap().clone();
                    let refunds = refund_failed(&mut self.ledger, &t);
                    let t = self.tournaments.get_mut(&index).unwrap();
                    t.refunds = refunds.clone();
                    events.push(AppEvent::TournamentFailed {
                        index,
                        refunds,
                        disqualified_challengers: Vec::new(),
                    });
                }
            }
        }
        events
    }

    /// Oldest unresolved tournament whose resolution deadline has passed.
    /// The proposer of the next block must publish its verdict.
    pub fn due_resolution(&self, now: u64) -> Option<u64> {
        self.tournaments
            .values()
            .filter(|t| {
                !t.is_resolved()
                    && t.phase == Phase::AwaitingReveals
                    && self.cfg.tournament_window(t.index).1 + self.cfg.proposer_deadline <= now
            })
            .map(|t| t.index)
            .min()
    }

    /// Compute the verdict the proposer is obliged to publish.
    pub fn expected_resolution(&self, index: u64, ctx: &ApplyCtx<'_>) -> Option<Resolution> {
        let t = self.tournaments.get(&index)?;
        Some(resolve(t, &self.cfg, &ctx.scoring()))
    }

    /// Validate and apply one transaction. Any error leaves the state
    /// bit-identical to before the call.
    pub fn apply_tx(
        &mut self,
        tx: &Transaction,
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        if !tx.signature_valid() {
            return Err(TxError::BadSignature);
        }
        if tx.sequence != self.expected_sequence(&tx.sender) {
            return Err(TxError::BadSequence);
        }
        let events = self.apply_body(&tx.sender, &tx.body, ctx)?;
        *self.next_seq.entry(tx.sender).or_insert(0) += 1;
        Ok(events)
    }

    fn apply_body(
        &mut self,
        sender: &AccountId,
        body: &TxBody,
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        match body {
            TxBody::SubmitAgent { uuid } => self.submit_agent(sender, uuid, ctx),
            TxBody::PublishDataset {
                inputs_ref,
                inputs_hash,
                encrypted_signals_ref,
                signals_hash,
            } => self.publish_dataset(
                sender,
                DatasetCommit {
                    inputs_ref: *inputs_ref,
                    inputs_hash: *inputs_hash,
                    encrypted_signals_ref: *encrypted_signals_ref,
                    signals_hash: *signals_hash,
                    revealed_key: None,
                },
                ctx,
            ),
            TxBody::SubmitSignal {
                agent,
                envelope,
                tick,
            } => self.submit_signal(sender, agent, envelope, *tick, ctx),
            TxBody::PublishDatasetDecryptionKey { key } => {
                self.publish_dataset_key(sender, key, ctx)
            }
            TxBody::PublishSignalDecryptionKey { agent, key, tick } => {
                self.publish_signal_key(sender, agent, key, *tick, ctx)
            }
            TxBody::PublishTournamentRanking { ranking } => {
                self.publish_resolution(sender, Some(ranking), ctx)
            }
            TxBody::TournamentFailure => self.publish_resolution(sender, None, ctx),
            TxBody::PublishAgentPrice {
                agent,
                scheme,
                price,
            } => self.publish_agent_price(sender, agent, *scheme, *price),
            TxBody::PublishDataPrice {
                data,
                scheme,
                price,
                ..
            } => self.publish_data_price(sender, data, *scheme, *price),
            TxBody::Rent { uuid, quantity } => self.rent(sender, uuid, *quantity),
        }
    }

    fn submit_agent(
        &mut self,
        sender: &AccountId,
        uuid: &Uuid,
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        if self.agents.contains_key(uuid) {
            return Err(TxError::DuplicateAgent);
        }
        // Registration always targets the next tournament window.
        let target = self.cfg.tournament_index(ctx.now) + 1;
        self.ledger
            .charge_fee(sender, self.cfg.agent_submission_fee, FeeKind::AgentSubmission)
            .map_err(ledger_err)?;
        self.agents.insert(
            *uuid,
            AgentRecord {
                owner: *sender,
                tournament: target,
                registered_at: ctx.now,
            },
        );
        let t = self
            .tournaments
            .entry(target)
            .or_insert_with(|| TournamentState::pending(target));
        t.participants.insert(*uuid, *sender);
        t.submitted_at.insert(*uuid, ctx.now);
        Ok(vec![AppEvent::AgentRegistered {
            agent: *uuid,
            owner: *sender,
            tournament: target,
        }])
    }

    fn publish_dataset(
        &mut self,
        sender: &AccountId,
        commit: DatasetCommit,
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        if self.cfg.problem_type != ProblemType::Dataset {
            return Err(TxError::WrongDomainType);
        }
        let index = self.cfg.tournament_index(ctx.now);
        let (start, _) = self.cfg.tournament_window(index);
        let deadline = start + self.cfg.dataset_submission_deadline.unwrap_or(0);
        let t = self
            .tournaments
            .get(&index)
            .filter(|t| t.phase == Phase::Active)
            .ok_or(TxError::OutsideWindow)?;
        let is_challenger = t
            .challengers
            .as_ref()
            .is_some_and(|set| set.contains(sender));
        if !is_challenger {
            return Err(TxError::NotChallenger);
        }
        if ctx.now > deadline + self.cfg.time_tolerance {
            return Err(TxError::OutsideWindow);
        }
        if t.datasets.contains_key(sender) {
            return Err(TxError::Duplicate);
        }
        self.ledger
            .charge_fee(sender, self.cfg.data_publish_fee, FeeKind::DataPublish)
            .map_err(ledger_err)?;
        let t = self.tournaments.get_mut(&index).unwrap();
        if self.cfg.data_publish_fee > 0 {
            // Data-publish fees land in the next pool by default but belong
            // to the running tournament's pool and refundable set.
            let receipt = self.ledger.next_receipts.pop().unwrap();
            self.ledger.next_reward_pool -= receipt.amount;
            self.ledger.current_reward_pool += receipt.amount;
            t.pool += receipt.amount;
            t.fee_receipts.push(receipt);
        }
        t.datasets.insert(*sender, commit);
        Ok(vec![AppEvent::DatasetPublished {
            tournament: index,
            challenger: *sender,
        }])
    }

    fn submit_signal(
        &mut self,
        sender: &AccountId,
        agent: &Uuid,
        envelope: &crate::crypto::SealedEnvelope,
        tick: Option<u64>,
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        let rec = self.agents.get(agent).ok_or(TxError::UnknownAgent)?;
        if rec.owner != *sender {
            return Err(TxError::NotOwner);
        }
        let index = rec.tournament;
        let (start, end) = self.cfg.tournament_window(index);
        match self.cfg.problem_type {
            ProblemType::RealTime => {
                let t = tick.ok_or(TxError::BadTick)?;
                let freq = self.cfg.real_time_frequency.unwrap_or(1);
                if t < start || t >= end || (t - start) % freq != 0 {
                    return Err(TxError::BadTick);
                }
                if !self.cfg.within_tolerance(t, ctx.now) {
                    return Err(TxError::OutsideWindow);
                }
            }
            ProblemType::Dataset => {
                if tick.is_some() {
                    return Err(TxError::BadTick);
                }
                let deadline = start + self.cfg.dataset_submission_deadline.unwrap_or(0);
                if ctx.now < deadline || ctx.now > end + self.cfg.time_tolerance {
                    return Err(TxError::OutsideWindow);
                }
            }
        }
        let t = self.tournaments.get_mut(&index).ok_or(TxError::OutsideWindow)?;
        if t.is_resolved() {
            return Err(TxError::OutsideWindow);
        }
        let key = SignalKey {
            agent: *agent,
            tick,
        };
        if t.envelopes.contains_key(&key) {
            return Err(TxError::Duplicate);
        }
        t.envelopes.insert(key, envelope.clone());
        Ok(vec![AppEvent::SignalCommitted {
            tournament: index,
            agent: *agent,
            tick,
        }])
    }

    fn publish_dataset_key(
        &mut self,
        sender: &AccountId,
        key: &[u8; 32],
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        if self.cfg.problem_type != ProblemType::Dataset {
            return Err(TxError::WrongDomainType);
        }
        // Keys are due at the end of the tournament window.
        let mut target: Option<u64> = None;
        for t in self.tournaments.values() {
            if t.is_resolved() {
                continue;
            }
            let (_, end) = self.cfg.tournament_window(t.index);
            if !self.cfg.within_tolerance(end, ctx.now) {
                continue;
            }
            if t.challengers.as_ref().is_some_and(|set| set.contains(sender)) {
                target = Some(t.index);
                break;
            }
        }
        let index = target.ok_or(TxError::OutsideWindow)?;
        let t = self.tournaments.get_mut(&index).unwrap();
        let commit = t.datasets.get_mut(sender).ok_or(TxError::UnknownSignal)?;
        if commit.revealed_key.is_some() {
            return Err(TxError::Duplicate);
        }
        commit.revealed_key = Some(*key);
        Ok(vec![AppEvent::DatasetKeyRevealed {
            tournament: index,
            challenger: *sender,
        }])
    }

    fn publish_signal_key(
        &mut self,
        sender: &AccountId,
        agent: &Uuid,
        key: &[u8; 32],
        tick: Option<u64>,
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        let rec = self.agents.get(agent).ok_or(TxError::UnknownAgent)?;
        if rec.owner != *sender {
            return Err(TxError::NotOwner);
        }
        let index = rec.tournament;
        let (start, end) = self.cfg.tournament_window(index);
        let due = match self.cfg.problem_type {
            ProblemType::RealTime => {
                let t = tick.ok_or(TxError::BadTick)?;
                // A tick's key is due one tick later; the last tick's key
                // lands exactly at the window end.
                t.max(start) + self.cfg.real_time_frequency.unwrap_or(0)
            }
            ProblemType::Dataset => {
                if tick.is_some() {
                    return Err(TxError::BadTick);
                }
                end
            }
        };
        if !self.cfg.within_tolerance(due, ctx.now) {
            return Err(TxError::OutsideWindow);
        }
        let t = self.tournaments.get_mut(&index).ok_or(TxError::OutsideWindow)?;
        if t.is_resolved() {
            return Err(TxError::OutsideWindow);
        }
        let skey = SignalKey {
            agent: *agent,
            tick,
        };
        if !t.envelopes.contains_key(&skey) {
            return Err(TxError::UnknownSignal);
        }
        if t.revealed_keys.contains_key(&skey) {
            return Err(TxError::Duplicate);
        }
        if t.used_keys.contains(&(*sender, *key)) {
            return Err(TxError::KeyReused);
        }
        // A key that cannot decrypt its envelope is rejected outright; the
        // subtler failure modes (lying commitment, copied ciphertext) leave
        // valid evidence on chain for resolution to judge.
        match open(&t.envelopes[&skey], key) {
            Err(EnvelopeError::DecryptFailed) | Err(EnvelopeError::Malformed) => {
                return Err(TxError::DecryptFailed)
            }
            Err(EnvelopeError::CommitMismatch) | Ok(_) => {}
        }
        t.revealed_keys.insert(skey, *key);
        t.used_keys.insert((*sender, *key));
        Ok(vec![AppEvent::SignalKeyRevealed {
            tournament: index,
            agent: *agent,
            tick,
        }])
    }

    fn publish_resolution(
        &mut self,
        sender: &AccountId,
        ranking: Option<&Vec<(Uuid, Score)>>,
        ctx: &ApplyCtx<'_>,
    ) -> Result<Vec<AppEvent>, TxError> {
        if *sender != ctx.proposer {
            return Err(TxError::NotProposer);
        }
        let index = self.due_resolution(ctx.now).ok_or(TxError::NothingToResolve)?;
        let resolution = self
            .expected_resolution(index, ctx)
            .ok_or(TxError::NothingToResolve)?;
        match (&resolution.outcome, ranking) {
            (ResolutionOutcome::Ranking(computed), Some(published)) => {
                if computed.0 != *published {
                    return Err(TxError::WrongVerdict);
                }
            }
            (ResolutionOutcome::Failure, None) => {}
            _ => return Err(TxError::WrongVerdict),
        }
        let t = self.tournaments.get_mut(&index).unwrap();
        t.disq_miners = resolution.disq_miners.clone();
        t.disq_challengers = resolution.disq_challengers.clone();
        match resolution.outcome {
            ResolutionOutcome::Ranking(computed) => {
                t.phase = Phase::Resolved;
                t.result = Some(computed.clone());
                let snapshot = t.clone();
                let payouts =
                    distribute_reward(&mut self.ledger, &snapshot, &computed, &self.cfg);
                let t = self.tournaments.get_mut(&index).unwrap();
                t.payouts = payouts.clone();
                Ok(vec![AppEvent::TournamentResolved {
                    index,
                    ranking: computed.0,
                    payouts,
                    disqualified_miners: resolution.disq_miners.into_iter().collect(),
                    disqualified_challengers: resolution.disq_challengers.into_iter().collect(),
                }])
            }
            ResolutionOutcome::Failure => {
                t.phase = Phase::Failed;
                let snapshot = t.clone();
                let refunds = refund_failed(&mut self.ledger, &snapshot);
                let t = self.tournaments.get_mut(&index).unwrap();
                t.refunds = refunds.clone();
                Ok(vec![AppEvent::TournamentFailed {
                    index,
                    refunds,
                    disqualified_challengers: resolution.disq_challengers.into_iter().collect(),
                }])
            }
        }
    }

    fn publish_agent_price(
        &mut self,
        sender: &AccountId,
        agent: &Uuid,
        scheme: PaymentScheme,
        price: Amount,
    ) -> Result<Vec<AppEvent>, TxError> {
        let rec = self.agents.get(agent).ok_or(TxError::UnknownAgent)?;
        if rec.owner != *sender {
            return Err(TxError::NotOwner);
        }
        let ranked = self
            .tournaments
            .get(&rec.tournament)
            .and_then(|t| t.result.as_ref())
            .is_some_and(|r| r.0.iter().any(|(u, _)| u == agent));
        if !ranked {
            return Err(TxError::NotRanked);
        }
        let listing = Listing {
            seller: *sender,
            kind: ListingKind::Agent,
            scheme,
            price,
        };
        // Re-publishing an identical listing changes nothing: spam.
        if self.listings.get(agent) == Some(&listing) {
            return Err(TxError::NoEffect);
        }
        self.ledger
            .charge_fee(sender, self.cfg.price_publish_fee, FeeKind::PricePublish)
            .map_err(ledger_err)?;
        self.listings.insert(*agent, listing);
        Ok(vec![AppEvent::PricePublished {
            uuid: *agent,
            seller: *sender,
            price,
        }])
    }

    fn publish_data_price(
        &mut self,
        sender: &AccountId,
        data: &Uuid,
        scheme: PaymentScheme,
        price: Amount,
    ) -> Result<Vec<AppEvent>, TxError> {
        // Only a challenger that served without disqualification in a
        // successful tournament may sell its dataset.
        let eligible = self.tournaments.values().any(|t| {
            t.phase == Phase::Resolved
                && t.challengers.as_ref().is_some_and(|set| set.contains(sender))
                && !t.disq_challengers.contains_key(sender)
        });
        if !eligible {
            return Err(TxError::NotEligible);
        }
        if self.agents.contains_key(data) {
            return Err(TxError::Duplicate);
        }
        let listing = Listing {
            seller: *sender,
            kind: ListingKind::Data,
            scheme,
            price,
        };
        match self.listings.get(data) {
            Some(existing) if *existing == listing => return Err(TxError::NoEffect),
            Some(existing) if existing.seller != *sender => return Err(TxError::Duplicate),
            _ => {}
        }
        self.ledger
            .charge_fee(sender, self.cfg.price_publish_fee, FeeKind::PricePublish)
            .map_err(ledger_err)?;
        self.listings.insert(*data, listing);
        Ok(vec![AppEvent::PricePublished {
            uuid: *data,
            seller: *sender,
            price,
        }])
    }

    fn rent(
        &mut self,
        sender: &AccountId,
        uuid: &Uuid,
        quantity: u64,
    ) -> Result<Vec<AppEvent>, TxError> {
        let listing = self.listings.get(uuid).ok_or(TxError::UnknownListing)?.clone();
        if quantity == 0 {
            return Err(TxError::NoEffect);
        }
        let cost = match listing.scheme {
            PaymentScheme::PerUse | PaymentScheme::Subscription => listing
                .price
                .checked_mul(quantity)
                .ok_or(TxError::Overflow)?,
            PaymentScheme::Buyout => {
                if quantity != 1 {
                    return Err(TxError::NoEffect);
                }
                listing.price
            }
        };
        let needed = cost
            .checked_add(self.cfg.rent_fee)
            .ok_or(TxError::Overflow)?;
        if self.ledger.balance(sender) < needed {
            return Err(TxError::InsufficientBalance);
        }
        self.ledger
            .transfer(sender, &listing.seller, cost)
            .map_err(ledger_err)?;
        self.ledger
            .charge_fee(sender, self.cfg.rent_fee, FeeKind::Rent)
            .map_err(ledger_err)?;
        if listing.scheme == PaymentScheme::Buyout {
            self.listings.remove(uuid);
        }
        Ok(vec![AppEvent::Rented {
            uuid: *uuid,
            renter: *sender,
            seller: listing.seller,
            cost,
        }])
    }
}

fn ledger_err(e: crate::ledger::LedgerError) -> TxError {
    match e {
        crate::ledger::LedgerError::Overflow => TxError::Overflow,
        _ => TxError::InsufficientBalance,
    }
}
