//! Deterministic discrete-event simulation of the peer network: scripted
//! scenarios, message latency and drops, fault injection, block production
//! with vote counting, and the canonical event log.
//!
//! A run is a pure function of its scenario: every random draw comes from
//! counter-mode digests of the scenario seed, and events are processed in
//! strict (time, sequence) order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{AppEvent, AppState};
use crate::blob::BlobStore;
use crate::codec::{digest_bytes, digest_parts, Canon, Digest, Enc};
use crate::config::{DomainConfig, ProblemType, Ratio, ValidatedConfig};
use crate::consensus::{block_accepted, DetRng};
use crate::crypto::{seal, seal_with_commit, AccountId, KeyPair, SealedEnvelope, SignalPayload};
use crate::ledger::Amount;
use crate::node::{expected_proposer, NodeState};
use crate::tournament::encode_dataset_signal;
use crate::toy::{agent_respond, generate_dataset, AgentBehavior, ToyDataset, TruthStream};
use crate::tx::{PaymentScheme, Transaction, TxBody, Uuid};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("scenario invalid: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AgentSpec {
    /// Small identifier unique across the scenario; agent uuids derive
    /// from it per tournament.
    pub tag: u8,
    pub behavior: AgentBehavior,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub key_seed: u8,
    pub balance: Amount,
    pub stake: Amount,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentSpec>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "fault", deny_unknown_fields)]
pub enum Fault {
    /// Delay every transaction of the given kind from this node.
    DelayTx { node: String, kind: String, by: u64 },
    /// Suppress every transaction of the given kind from this node.
    DropTx { node: String, kind: String },
    /// Burst of structurally valid but worthless transactions.
    SpamTx { node: String, count: u64, at: u64 },
    /// Challenger publishes a dataset whose output hash is a lie.
    CorruptDataset { node: String },
    /// Challenger secretly hands its true outputs to one miner's agent.
    LeakOutputs { node: String, to_agent: u8 },
    /// Node stops proposing, voting, and emitting in this window (it still
    /// receives blocks; chain sync for crashed nodes is out of scope).
    Offline { node: String, from: u64, until: u64 },
    /// Off-chain service not delivered after a rent; log-only, since the
    /// chain cannot observe it.
    ServiceFailure { node: String, at: u64 },
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub config: DomainConfig,
    pub block_interval: u64,
    pub run_until: u64,
    pub min_latency: u64,
    pub max_latency: u64,
    pub drop_rate: Ratio,
    /// Bias of the simulated world's truth stream (real-time domains).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_bias: Option<Ratio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_balance: Option<Ratio>,
    /// Miners register fresh agents for tournaments 1..=tournaments.
    pub tournaments: u64,
    /// After each resolution, the winner lists its agent and another node
    /// rents it.
    #[serde(default)]
    pub marketplace: bool,
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<Fault>,
}

impl Scenario {
    pub fn validate(&self) -> Result<ValidatedConfig, ScenarioError> {
        let cfg = self
            .config
            .clone()
            .validate()
            .map_err(|e| invalid(format!("config: {e}")))?;
        if self.nodes.is_empty() {
            return Err(invalid("no nodes"));
        }
        let mut names = BTreeSet::new();
        let mut seeds = BTreeSet::new();
        let mut tags = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(&n.name) {
                return Err(invalid(format!("duplicate node name {}", n.name)));
            }
            if !seeds.insert(n.key_seed) {
                return Err(invalid(format!("duplicate key seed {}", n.key_seed)));
            }
            for a in &n.agents {
                if !tags.insert(a.tag) {
                    return Err(invalid(format!("duplicate agent tag {}", a.tag)));
                }
            }
        }
        if self.block_interval == 0 {
            return Err(invalid("blockInterval must be positive"));
        }
        if self.min_latency == 0 || self.max_latency < self.min_latency {
            return Err(invalid("latency bounds must satisfy 1 <= min <= max"));
        }
        if self.tournaments == 0 {
            return Err(invalid("at least one tournament required"));
        }
        match cfg.problem_type {
            ProblemType::RealTime => {
                if self.truth_bias.is_none() {
                    return Err(invalid("realTime scenarios need truthBias"));
                }
            }
            ProblemType::Dataset => {
                if self.dataset_size.unwrap_or(0) == 0 || self.dataset_balance.is_none() {
                    return Err(invalid("dataset scenarios need datasetSize and datasetBalance"));
                }
            }
        }
        for f in &self.faults {
            let node = match f {
                Fault::DelayTx { node, .. }
                | Fault::DropTx { node, .. }
                | Fault::SpamTx { node, .. }
                | Fault::CorruptDataset { node }
                | Fault::LeakOutputs { node, .. }
                | Fault::Offline { node, .. }
                | Fault::ServiceFailure { node, .. } => node,
            };
            if !names.contains(node) {
                return Err(invalid(format!("fault references unknown node {node}")));
            }
        }
        Ok(cfg)
    }

    pub fn digest(&self) -> Digest {
        digest_bytes(serde_json::to_string(self).expect("scenario serializes").as_bytes())
    }
}

/// One canonical log record; the run log is one JSON line per record.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum LogLine {
    Scenario {
        scenario: Scenario,
    },
    TxEmitted {
        time: u64,
        node: String,
        tx: String,
        digest: Digest,
    },
    Block {
        time: u64,
        height: u64,
        proposer: String,
        retry: u64,
        txs: Vec<String>,
        state: Digest,
        block: Digest,
        voted_power: u128,
        total_power: u128,
        events: Vec<AppEvent>,
    },
    BlockWithoutQuorum {
        time: u64,
        height: u64,
        voted_power: u128,
        total_power: u128,
    },
    ServiceFailure {
        time: u64,
        node: String,
    },
    Violation {
        time: u64,
        message: String,
    },
    Final {
        digests: Vec<Digest>,
        conserved: bool,
        total_supply: Amount,
        blocks: u64,
    },
}

pub struct SimOutcome {
    /// Serialized log lines, in order.
    pub log: Vec<String>,
    pub digests: Vec<Digest>,
    pub violations: Vec<String>,
    pub blocks: u64,
    /// (commit time, event) pairs across the whole run.
    pub events: Vec<(u64, AppEvent)>,
    pub final_state: AppState,
    pub node_names: Vec<String>,
}

enum Action {
    BlockTick,
    Emit {
        node: usize,
        body: TxBody,
        delayed: bool,
    },
    Deliver {
        to: usize,
        tx: Transaction,
    },
    Note(LogLine),
}

struct Sim {
    scenario: Scenario,
    cfg: ValidatedConfig,
    truth: Option<TruthStream>,
    nodes: Vec<NodeState>,
    accounts: BTreeMap<AccountId, usize>,
    blobs: BlobStore,
    queue: BTreeMap<(u64, u64), Action>,
    seq: u64,
    log: Vec<String>,
    violations: Vec<String>,
    blocks: u64,
    events: Vec<(u64, AppEvent)>,
    datasets: BTreeMap<(usize, u64), (ToyDataset, [u8; 32])>,
    duties_scheduled: BTreeSet<u64>,
    marketed: BTreeSet<u64>,
    parallel: bool,
    halted: bool,
}

/// Execute a scenario to completion. Pure in (scenario, parallel): the
/// parallel flag must not change any output, only which threads validate.
pub fn run_scenario(scenario: &Scenario, parallel: bool) -> Result<SimOutcome, ScenarioError> {
    let cfg = scenario.validate()?;
    let mut sim = Sim::new(scenario.clone(), cfg, parallel);
    sim.schedule_static();
    sim.run();
    Ok(sim.finish())
}

impl Sim {
    fn new(scenario: Scenario, cfg: ValidatedConfig, parallel: bool) -> Sim {
        let truth = match cfg.problem_type {
            ProblemType::RealTime => Some(TruthStream {
                seed: scenario.seed,
                bias: scenario.truth_bias.unwrap(),
            }),
            ProblemType::Dataset => None,
        };
        let mut allocations = BTreeMap::new();
        let mut stakes = BTreeMap::new();
        let mut accounts = BTreeMap::new();
        for (i, spec) in scenario.nodes.iter().enumerate() {
            let account = KeyPair::from_seed(&[spec.key_seed; 32]).account();
            allocations.insert(account, spec.balance);
            if spec.stake > 0 {
                stakes.insert(account, (spec.stake, 0));
            }
            accounts.insert(account, i);
        }
        let genesis = AppState::genesis(cfg.clone(), &allocations, &stakes)
            .expect("validated scenario builds a genesis state");
        let nodes = scenario
            .nodes
            .iter()
            .map(|spec| NodeState::new(KeyPair::from_seed(&[spec.key_seed; 32]), genesis.clone()))
            .collect();
        let header = LogLine::Scenario {
            scenario: scenario.clone(),
        };
        let mut sim = Sim {
            scenario,
            cfg,
            truth,
            nodes,
            accounts,
            blobs: BlobStore::new(),
            queue: BTreeMap::new(),
            seq: 0,
            log: Vec::new(),
            violations: Vec::new(),
            blocks: 0,
            events: Vec::new(),
            datasets: BTreeMap::new(),
            duties_scheduled: BTreeSet::new(),
            marketed: BTreeSet::new(),
            parallel: false,
            halted: false,
        };
        sim.parallel = parallel;
        sim.emit_log(header);
        sim
    }

    fn emit_log(&mut self, line: LogLine) {
        self.log
            .push(serde_json::to_string(&line).expect("log line serializes"));
    }

    fn push(&mut self, time: u64, action: Action) {
        self.queue.insert((time, self.seq), action);
        self.seq += 1;
    }

    fn offline(&self, node: usize, at: u64) -> bool {
        let name = &self.scenario.nodes[node].name;
        self.scenario.faults.iter().any(|f| {
            matches!(f, Fault::Offline { node, from, until }
                if node == name && *from <= at && at < *until)
        })
    }

    fn tx_fault(&self, node: usize, kind: &str) -> Option<&Fault> {
        let name = &self.scenario.nodes[node].name;
        self.scenario.faults.iter().find(|f| match f {
            Fault::DelayTx { node, kind: k, .. } | Fault::DropTx { node, kind: k } => {
                node == name && k == kind
            }
            _ => false,
        })
    }

    fn agent_uuid(&self, node: usize, tag: u8, tournament: u64) -> Uuid {
        Uuid::from_digest(&digest_parts(&[
            b"agent",
            &self.scenario.seed.to_be_bytes(),
            &[self.scenario.nodes[node].key_seed, tag],
            &tournament.to_be_bytes(),
        ]))
    }

    fn signal_secret(&self, node: usize, tag: u8, tournament: u64, tick: Option<u64>) -> ([u8; 32], [u8; 12]) {
        let spec = &self.scenario.nodes[node];
        // A key-reusing agent encrypts every tick with its first key.
        let effective_tick = match spec.agents.iter().find(|a| a.tag == tag).map(|a| &a.behavior) {
            Some(AgentBehavior::KeyReuser) => None,
            _ => tick,
        };
        let mut e = Enc::new();
        e.u64(self.scenario.seed);
        e.u8(spec.key_seed);
        e.u8(tag);
        e.u64(tournament);
        e.opt_u64(effective_tick);
        let key = *digest_parts(&[b"skey", &e.finish()]).as_bytes();
        let nonce_digest = digest_parts(&[b"nonce", &key]);
        let mut nonce = [0u8; 12];
        nonce.copy_from_slice(&nonce_digest.as_bytes()[..12]);
        (key, nonce)
    }

    fn behavior_seed(&self, node: usize, tag: u8, tournament: u64) -> Digest {
        digest_parts(&[
            b"behavior",
            &self.scenario.seed.to_be_bytes(),
            &[self.scenario.nodes[node].key_seed, tag],
            &tournament.to_be_bytes(),
        ])
    }

    /// The exact envelope a real-time agent seals for one tick, so a
    /// copycat can reproduce its target's ciphertext byte for byte.
    fn realtime_envelope(&self, node: usize, tag: u8, behavior: &AgentBehavior, tournament: u64, tick: u64) -> SealedEnvelope {
        let truth = self.truth.as_ref().expect("real-time domain").outcome(tick);
        let seed = self.behavior_seed(node, tag, tournament);
        let prediction = agent_respond(behavior, truth, &seed, &tick.to_be_bytes());
        let payload = SignalPayload {
            signal: vec![prediction as u8],
            author_key: self.nodes[node].keys.verifying_key(),
        };
        let (key, nonce) = self.signal_secret(node, tag, tournament, Some(tick));
        match behavior {
            AgentBehavior::BadCommit => {
                seal_with_commit(&payload.to_bytes(), &key, &nonce, digest_bytes(b"lie"))
            }
            _ => seal(&payload.to_bytes(), &key, &nonce),
        }
    }

    fn find_agent(&self, tag: u8) -> Option<(usize, &AgentSpec)> {
        for (i, spec) in self.scenario.nodes.iter().enumerate() {
            if let Some(a) = spec.agents.iter().find(|a| a.tag == tag) {
                return Some((i, a));
            }
        }
        None
    }

    /// Schedule everything known before the run starts: block ticks, agent
    /// registrations, real-time signal duty, spam bursts, and timed notes.
    fn schedule_static(&mut self) {
        let mut t = self.scenario.block_interval;
        while t <= self.scenario.run_until {
            self.push(t, Action::BlockTick);
            t += self.scenario.block_interval;
        }
        for k in 1..=self.scenario.tournaments {
            let (start, _) = self.cfg.tournament_window(k);
            let register_at = start - self.cfg.tournament_start_frequency + 500;
            for node in 0..self.scenario.nodes.len() {
                for (j, agent) in self.scenario.nodes[node].agents.clone().iter().enumerate() {
                    let uuid = self.agent_uuid(node, agent.tag, k);
                    self.push(
                        register_at + (node as u64 * 8 + j as u64) * 13,
                        Action::Emit {
                            node,
                            body: TxBody::SubmitAgent { uuid },
                            delayed: false,
                        },
                    );
                }
            }
            if self.cfg.problem_type == ProblemType::RealTime {
                self.schedule_realtime_tournament(k);
            }
        }
        for fault in self.scenario.faults.clone() {
            match fault {
                Fault::SpamTx { node, count, at } => {
                    let idx = self.node_by_name(&node);
                    for i in 0..count {
                        self.push(
                            at + i,
                            Action::Emit {
                                node: idx,
                                body: TxBody::Rent {
                                    uuid: Uuid([0xEE; 16]),
                                    quantity: 1,
                                },
                                delayed: false,
                            },
                        );
                    }
                }
                Fault::ServiceFailure { node, at } => {
                    self.push(at, Action::Note(LogLine::ServiceFailure { time: at, node }));
                }
                _ => {}
            }
        }
    }

    fn node_by_name(&self, name: &str) -> usize {
        self.scenario
            .nodes
            .iter()
            .position(|n| n.name == name)
            .expect("validated fault target")
    }

    fn schedule_realtime_tournament(&mut self, k: u64) {
        let ticks = self.cfg.realtime_ticks(k).expect("real-time domain");
        let freq = self.cfg.real_time_frequency.unwrap();
        let tol = self.cfg.time_tolerance;
        for node in 0..self.scenario.nodes.len() {
            for agent in self.scenario.nodes[node].agents.clone() {
                let uuid = self.agent_uuid(node, agent.tag, k);
                match &agent.behavior {
                    AgentBehavior::Silent => {}
                    AgentBehavior::Copycat(target) => {
                        // Copy the victim's ciphertext shortly after it
                        // appears, and its revealed key likewise.
                        let tag: u8 = target.parse().expect("copycat target tag");
                        let Some((vnode, vspec)) = self.find_agent(tag) else {
                            continue;
                        };
                        let (vbehavior, vtag) = (vspec.behavior.clone(), vspec.tag);
                        for tick in &ticks {
                            let env =
                                self.realtime_envelope(vnode, vtag, &vbehavior, k, *tick);
                            let (key, _) = self.signal_secret(vnode, vtag, k, Some(*tick));
                            self.push(
                                tick + 200,
                                Action::Emit {
                                    node,
                                    body: TxBody::SubmitSignal {
                                        agent: uuid,
                                        envelope: env,
                                        tick: Some(*tick),
                                    },
                                    delayed: false,
                                },
                            );
                            self.push(
                                tick + freq + 200,
                                Action::Emit {
                                    node,
                                    body: TxBody::PublishSignalDecryptionKey {
                                        agent: uuid,
                                        key,
                                        tick: Some(*tick),
                                    },
                                    delayed: false,
                                },
                            );
                        }
                    }
                    behavior => {
                        for tick in &ticks {
                            let env = self.realtime_envelope(node, agent.tag, behavior, k, *tick);
                            let (key, _) = self.signal_secret(node, agent.tag, k, Some(*tick));
                            self.push(
                                *tick,
                                Action::Emit {
                                    node,
                                    body: TxBody::SubmitSignal {
                                        agent: uuid,
                                        envelope: env,
                                        tick: Some(*tick),
                                    },
                                    delayed: false,
                                },
                            );
                            let reveal_at = match behavior {
                                AgentBehavior::LateRevealer => tick + freq + 3 * tol,
                                _ => tick + freq,
                            };
                            self.push(
                                reveal_at,
                                Action::Emit {
                                    node,
                                    body: TxBody::PublishSignalDecryptionKey {
                                        agent: uuid,
                                        key,
                                        tick: Some(*tick),
                                    },
                                    delayed: false,
                                },
                            );
                        }
                    }
                }
            }
        }
    }

    /// Challenger and miner duties become schedulable only once the chain
    /// announces the challenger set.
    fn schedule_dataset_duties(&mut self, k: u64, members: &[AccountId], commit_time: u64) {
        if !self.duties_scheduled.insert(k) {
            return;
        }
        let (start, end) = self.cfg.tournament_window(k);
        let deadline = start + self.cfg.dataset_submission_deadline.unwrap_or(0);
        let size = self.scenario.dataset_size.unwrap() as usize;
        let balance = self.scenario.dataset_balance.unwrap();
        for (i, account) in members.iter().enumerate() {
            let node = self.accounts[account];
            let name = self.scenario.nodes[node].name.clone();
            let ds_seed = digest_parts(&[
                b"ds",
                &self.scenario.seed.to_be_bytes(),
                account.0.as_bytes(),
                &k.to_be_bytes(),
            ]);
            let dataset = generate_dataset(&ds_seed, size, balance).expect("valid dataset spec");
            let dkey = *digest_parts(&[b"dskey", ds_seed.as_bytes()]).as_bytes();
            let mut nonce = [0u8; 12];
            nonce.copy_from_slice(&digest_parts(&[b"dsnonce", &dkey]).as_bytes()[..12]);
            let plaintext = dataset.outputs_bytes();
            let envelope = seal(&plaintext, &dkey, &nonce);
            let corrupt = self
                .scenario
                .faults
                .iter()
                .any(|f| matches!(f, Fault::CorruptDataset { node } if *node == name));
            let signals_hash = if corrupt {
                digest_bytes(b"corrupt")
            } else {
                digest_bytes(&plaintext)
            };
            let mut e = Enc::new();
            dataset.inputs.encode(&mut e);
            let inputs_bytes = e.finish();
            let inputs_hash = digest_bytes(&inputs_bytes);
            let inputs_ref = self.blobs.put(inputs_bytes);
            let encrypted_signals_ref = self.blobs.put(envelope.to_wire());
            self.datasets.insert((node, k), (dataset, dkey));
            self.push(
                commit_time.max(start) + 1_500 + i as u64 * 50,
                Action::Emit {
                    node,
                    body: TxBody::PublishDataset {
                        inputs_ref,
                        inputs_hash,
                        encrypted_signals_ref,
                        signals_hash,
                    },
                    delayed: false,
                },
            );
            self.push(
                end,
                Action::Emit {
                    node,
                    body: TxBody::PublishDatasetDecryptionKey { key: dkey },
                    delayed: false,
                },
            );
        }
        for node in 0..self.scenario.nodes.len() {
            for (j, agent) in self.scenario.nodes[node].agents.clone().iter().enumerate() {
                if matches!(agent.behavior, AgentBehavior::Silent) {
                    continue;
                }
                let uuid = self.agent_uuid(node, agent.tag, k);
                let seed = self.behavior_seed(node, agent.tag, k);
                let mut preds: BTreeMap<AccountId, Vec<bool>> = BTreeMap::new();
                for account in members {
                    let cnode = self.accounts[account];
                    let cname = &self.scenario.nodes[cnode].name;
                    let (dataset, _) = &self.datasets[&(cnode, k)];
                    let leaked = self.scenario.faults.iter().any(|f| {
                        matches!(f, Fault::LeakOutputs { node, to_agent }
                            if node == cname && *to_agent == agent.tag)
                    });
                    let row: Vec<bool> = if leaked {
                        dataset.outputs.clone()
                    } else {
                        dataset
                            .outputs
                            .iter()
                            .enumerate()
                            .map(|(case, truth)| {
                                let mut c = Enc::new();
                                account.encode(&mut c);
                                c.u64(case as u64);
                                agent_respond(&agent.behavior, *truth, &seed, &c.finish())
                            })
                            .collect()
                    };
                    preds.insert(*account, row);
                }
                let payload = SignalPayload {
                    signal: encode_dataset_signal(&preds),
                    author_key: self.nodes[node].keys.verifying_key(),
                };
                let (key, nonce) = self.signal_secret(node, agent.tag, k, None);
                let envelope = match agent.behavior {
                    AgentBehavior::BadCommit => {
                        seal_with_commit(&payload.to_bytes(), &key, &nonce, digest_bytes(b"lie"))
                    }
                    _ => seal(&payload.to_bytes(), &key, &nonce),
                };
                self.push(
                    deadline + 1_000 + j as u64 * 50,
                    Action::Emit {
                        node,
                        body: TxBody::SubmitSignal {
                            agent: uuid,
                            envelope,
                            tick: None,
                        },
                        delayed: false,
                    },
                );
                let reveal_at = match agent.behavior {
                    AgentBehavior::LateRevealer => end + 3 * self.cfg.time_tolerance,
                    _ => end,
                };
                self.push(
                    reveal_at,
                    Action::Emit {
                        node,
                        body: TxBody::PublishSignalDecryptionKey {
                            agent: uuid,
                            key,
                            tick: None,
                        },
                        delayed: false,
                    },
                );
            }
        }
    }

    fn schedule_marketplace(&mut self, index: u64, ranking: &[(Uuid, crate::score::Score)], commit_time: u64) {
        if !self.scenario.marketplace || ranking.is_empty() || !self.marketed.insert(index) {
            return;
        }
        let winner = ranking[0].0;
        let owner = self.nodes[0].app.agents[&winner].owner;
        let owner_idx = self.accounts[&owner];
        self.push(
            commit_time + 400,
            Action::Emit {
                node: owner_idx,
                body: TxBody::PublishAgentPrice {
                    agent: winner,
                    scheme: PaymentScheme::PerUse,
                    price: 7,
                },
                delayed: false,
            },
        );
        let renter = (0..self.nodes.len())
            .find(|i| *i != owner_idx)
            .unwrap_or(owner_idx);
        self.push(
            commit_time + 1_600,
            Action::Emit {
                node: renter,
                body: TxBody::Rent {
                    uuid: winner,
                    quantity: 2,
                },
                delayed: false,
            },
        );
    }

    fn run(&mut self) {
        while let Some(((time, _), action)) = self.queue.pop_first() {
            if self.halted || time > self.scenario.run_until {
                break;
            }
            match action {
                Action::BlockTick => self.block_tick(time),
                Action::Emit {
                    node,
                    body,
                    delayed,
                } => self.emit(time, node, body, delayed),
                Action::Deliver { to, tx } => {
                    let _ = self.nodes[to].ingest_tx(tx);
                }
                Action::Note(line) => self.emit_log(line),
            }
        }
    }

    fn emit(&mut self, time: u64, node: usize, body: TxBody, delayed: bool) {
        if self.offline(node, time) {
            return;
        }
        let delay = match self.tx_fault(node, body.kind_name()) {
            Some(Fault::DropTx { .. }) => return,
            Some(Fault::DelayTx { by, .. }) if !delayed => Some(*by),
            _ => None,
        };
        if let Some(by) = delay {
            self.push(time + by, Action::Emit {
                node,
                body,
                delayed: true,
            });
            return;
        }
        let keys = self.nodes[node].keys.clone();
        let tx = Transaction::sign(&keys, self.nodes[node].next_emit_sequence(), body);
        let digest = tx.digest();
        let _ = self.nodes[node].ingest_tx(tx.clone());
        self.emit_log(LogLine::TxEmitted {
            time,
            node: self.scenario.nodes[node].name.clone(),
            tx: tx.body.kind_name().to_string(),
            digest,
        });
        for to in 0..self.nodes.len() {
            if to == node {
                continue;
            }
            // Draws are keyed per (transaction, recipient) so one message's
            // fate never shifts another's; extra traffic cannot perturb the
            // delivery schedule of unrelated transactions.
            let mut rng = DetRng::from_parts(&[
                b"net",
                &self.scenario.seed.to_be_bytes(),
                digest.as_bytes(),
                &(to as u64).to_be_bytes(),
            ]);
            let dropped = rng.next_bool(self.scenario.drop_rate);
            let latency = self.scenario.min_latency
                + rng.below((self.scenario.max_latency - self.scenario.min_latency + 1) as u128)
                    as u64;
            if !dropped {
                self.push(time + latency, Action::Deliver {
                    to,
                    tx: tx.clone(),
                });
            }
        }
    }

    fn violation(&mut self, time: u64, message: String) {
        self.emit_log(LogLine::Violation {
            time,
            message: message.clone(),
        });
        self.violations.push(message);
        self.halted = true;
    }

    fn block_tick(&mut self, time: u64) {
        let total = self.nodes[0].app.ledger.total_power(time);
        if total == 0 {
            return;
        }
        let height = self.nodes[0].height + 1;
        let mut chosen: Option<(usize, u64)> = None;
        for retry in 0..self.nodes.len() as u64 {
            let Ok(account) =
                expected_proposer(&self.nodes[0].app, &self.nodes[0].head, height, time, retry)
            else {
                return;
            };
            let idx = self.accounts[&account];
            if !self.offline(idx, time) {
                chosen = Some((idx, retry));
                break;
            }
        }
        let Some((proposer_idx, retry)) = chosen else {
            return;
        };
        let Some(block) = self.nodes[proposer_idx].propose(time, self.truth, &self.blobs) else {
            return;
        };
        let results: Vec<_> = if self.parallel {
            std::thread::scope(|scope| {
                let block = &block;
                let blobs = &self.blobs;
                let truth = self.truth;
                let handles: Vec<_> = self
                    .nodes
                    .iter()
                    .map(|n| scope.spawn(move || n.process_block(block, retry, truth, blobs)))
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            })
        } else {
            self.nodes
                .iter()
                .map(|n| n.process_block(&block, retry, self.truth, &self.blobs))
                .collect()
        };
        let mut states = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(pair) => states.push(pair),
                Err(e) => {
                    let name = self.scenario.nodes[i].name.clone();
                    self.violation(time, format!("honest node {name} rejected block {height}: {e}"));
                    return;
                }
            }
        }
        let digest0 = states[0].0.digest();
        if let Some(i) = states.iter().position(|(app, _)| app.digest() != digest0) {
            let name = self.scenario.nodes[i].name.clone();
            self.violation(time, format!("state divergence at block {height} on node {name}"));
            return;
        }
        let voted: u128 = (0..self.nodes.len())
            .filter(|i| !self.offline(*i, time))
            .map(|i| {
                self.nodes[0]
                    .app
                    .ledger
                    .consensus_power(&self.nodes[i].account(), time)
            })
            .sum();
        if !block_accepted(voted, total) {
            self.emit_log(LogLine::BlockWithoutQuorum {
                time,
                height,
                voted_power: voted,
                total_power: total,
            });
            return;
        }
        let events = states[0].1.clone();
        let tx_kinds: Vec<String> = block
            .txs
            .iter()
            .map(|t| t.body.kind_name().to_string())
            .collect();
        for (node, (app, _)) in self.nodes.iter_mut().zip(states) {
            node.commit(&block, app);
        }
        self.blocks += 1;
        if !self.nodes[0].app.ledger.conservation_holds() {
            self.violation(time, format!("token conservation broken at block {height}"));
            return;
        }
        self.emit_log(LogLine::Block {
            time,
            height,
            proposer: self.scenario.nodes[proposer_idx].name.clone(),
            retry,
            txs: tx_kinds,
            state: digest0,
            block: block.digest(),
            voted_power: voted,
            total_power: total,
            events: events.clone(),
        });
        for event in &events {
            self.events.push((time, event.clone()));
        }
        let scheduled: Vec<AppEvent> = events;
        for event in scheduled {
            match event {
                AppEvent::ChallengersSelected { index, members } => {
                    self.schedule_dataset_duties(index, &members, time);
                }
                AppEvent::TournamentResolved { index, ranking, .. } => {
                    self.schedule_marketplace(index, &ranking, time);
                }
                _ => {}
            }
        }
    }

    fn finish(mut self) -> SimOutcome {
        let digests: Vec<Digest> = self.nodes.iter().map(|n| n.app.digest()).collect();
        let conserved = self.nodes[0].app.ledger.conservation_holds();
        self.emit_log(LogLine::Final {
            digests: digests.clone(),
            conserved,
            total_supply: self.nodes[0].app.ledger.total_supply,
            blocks: self.blocks,
        });
        if digests.iter().any(|d| *d != digests[0]) {
            self.violations.push("final state digests diverge".to_string());
        }
        if !conserved {
            self.violations.push("final token conservation broken".to_string());
        }
        SimOutcome {
            log: self.log,
            digests,
            violations: self.violations,
            blocks: self.blocks,
            events: self.events,
            final_state: self.nodes.swap_remove(0).app,
            node_names: self.scenario.nodes.iter().map(|n| n.name.clone()).collect(),
        }
    }
}
