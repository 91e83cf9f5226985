//! A single replica: mempool, block proposal with the resolution
//! obligation, full block validation, and commit bookkeeping.
//!
//! Vote collection and the >2/3 acceptance rule live with the network
//! simulator; a node only ever answers "what state does this block lead
//! to", identically on every honest replica.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::app::{AppEvent, AppState, ApplyCtx, TxError};
use crate::blob::BlobStore;
use crate::codec::{canon_bytes, digest_bytes, Canon, Digest, Enc};
use crate::consensus::{select_proposer, SelectionError, SelectionSeed};
use crate::crypto::{verify_signature, AccountId, KeyPair, SIG_LEN};
use crate::tournament::ResolutionOutcome;
use crate::toy::TruthStream;
use crate::tx::{Transaction, TxBody};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub height: u64,
    pub prev: Digest,
    pub proposer: AccountId,
    pub timestamp: u64,
    pub txs: Vec<Transaction>,
    /// Proposer's key and signature over the header and transactions.
    pub proposer_key: [u8; 32],
    pub signature: [u8; SIG_LEN],
}

impl Block {
    fn signing_bytes(
        height: u64,
        prev: &Digest,
        proposer: &AccountId,
        timestamp: u64,
        txs: &[Transaction],
    ) -> Vec<u8> {
        let mut e = Enc::new();
        e.u64(height);
        prev.encode(&mut e);
        proposer.encode(&mut e);
        e.u64(timestamp);
        txs.to_vec().encode(&mut e);
        e.finish()
    }

    pub fn sign(
        keys: &KeyPair,
        height: u64,
        prev: Digest,
        timestamp: u64,
        txs: Vec<Transaction>,
    ) -> Block {
        let proposer = keys.account();
        let msg = Block::signing_bytes(height, &prev, &proposer, timestamp, &txs);
        Block {
            height,
            prev,
            proposer,
            timestamp,
            txs,
            proposer_key: keys.verifying_key(),
            signature: keys.sign(&msg),
        }
    }

    pub fn signature_valid(&self) -> bool {
        if AccountId::from_verifying_key(&self.proposer_key) != self.proposer {
            return false;
        }
        let msg = Block::signing_bytes(
            self.height,
            &self.prev,
            &self.proposer,
            self.timestamp,
            &self.txs,
        );
        verify_signature(&self.proposer_key, &msg, &self.signature)
    }

    pub fn digest(&self) -> Digest {
        digest_bytes(&canon_bytes(self))
    }
}

impl Canon for Block {
    fn encode(&self, e: &mut Enc) {
        e.u64(self.height);
        self.prev.encode(e);
        self.proposer.encode(e);
        e.u64(self.timestamp);
        self.txs.to_vec().encode(e);
        e.raw(&self.proposer_key);
        e.raw(&self.signature);
    }
}

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum BlockError {
    #[error("wrong block height")]
    WrongHeight,
    #[error("previous-block digest mismatch")]
    WrongPrev,
    #[error("proposer does not match the selection draw")]
    WrongProposer,
    #[error("bad block signature")]
    BadSignature,
    #[error("block timestamp moves backwards")]
    NonMonotonicTime,
    #[error("block carries no transactions")]
    EmptyBlock,
    #[error("transaction {0} invalid: {1}")]
    InvalidTx(usize, TxError),
    #[error("proposer omitted an overdue tournament resolution")]
    MissingResolution,
    #[error("no eligible proposer: {0}")]
    Selection(SelectionError),
}

/// The proposer the selection draw demands for the given slot.
pub fn expected_proposer(
    app: &AppState,
    prev: &Digest,
    height: u64,
    timestamp: u64,
    retry: u64,
) -> Result<AccountId, SelectionError> {
    select_proposer(
        &app.ledger.powers(timestamp),
        SelectionSeed::new(prev, height, "proposer", retry),
    )
}

#[derive(Clone)]
pub struct NodeState {
    pub keys: KeyPair,
    pub app: AppState,
    pub height: u64,
    /// Digest of the last committed block, or of the genesis state.
    pub head: Digest,
    pub mempool: BTreeMap<(AccountId, u64), Transaction>,
}

impl NodeState {
    pub fn new(keys: KeyPair, app: AppState) -> NodeState {
        let head = app.digest();
        NodeState {
            keys,
            app,
            height: 0,
            head,
            mempool: BTreeMap::new(),
        }
    }

    pub fn account(&self) -> AccountId {
        self.keys.account()
    }

    /// Accept a transaction into the mempool. Only cheap local checks here;
    /// full validity is judged at block time.
    pub fn ingest_tx(&mut self, tx: Transaction) -> Result<(), TxError> {
        if !tx.signature_valid() {
            return Err(TxError::BadSignature);
        }
        if tx.sequence < self.app.expected_sequence(&tx.sender) {
            return Err(TxError::BadSequence);
        }
        let key = (tx.sender, tx.sequence);
        if self.mempool.contains_key(&key) {
            return Err(TxError::Duplicate);
        }
        self.mempool.insert(key, tx);
        Ok(())
    }

    /// Sequence this node should stamp on its next emitted transaction:
    /// the applied counter plus whatever it already has in flight.
    pub fn next_emit_sequence(&self) -> u64 {
        let me = self.account();
        let applied = self.app.expected_sequence(&me);
        let pending = self
            .mempool
            .keys()
            .filter(|(sender, _)| *sender == me)
            .count() as u64;
        applied + pending
    }

    /// Build a block for the given slot, or `None` when there is nothing to
    /// put in one. Mempool transactions that fail against the advanced
    /// state are silently skipped; overdue tournament resolutions are
    /// appended because validators will reject the block without them.
    pub fn propose(
        &self,
        timestamp: u64,
        truth: Option<TruthStream>,
        blobs: &BlobStore,
    ) -> Option<Block> {
        let me = self.account();
        let crossed = self.boundary_crossed(timestamp);
        let mut app = self.app.clone();
        app.advance(timestamp, &self.head);
        let ctx = ApplyCtx {
            now: timestamp,
            proposer: me,
            truth,
            blobs,
        };
        let mut txs = Vec::new();
        for tx in self.mempool.values() {
            if app.apply_tx(tx, &ctx).is_ok() {
                txs.push(tx.clone());
            }
        }
        while let Some(index) = app.due_resolution(timestamp) {
            let resolution = app.expected_resolution(index, &ctx)?;
            let body = match resolution.outcome {
                ResolutionOutcome::Ranking(r) => TxBody::PublishTournamentRanking { ranking: r.0 },
                ResolutionOutcome::Failure => TxBody::TournamentFailure,
            };
            let tx = Transaction::sign(&self.keys, app.expected_sequence(&me), body);
            if app.apply_tx(&tx, &ctx).is_err() {
                break;
            }
            txs.push(tx);
        }
        if txs.is_empty() && !crossed {
            return None;
        }
        Some(Block::sign(&self.keys, self.height + 1, self.head, timestamp, txs))
    }

    /// Does a block at `timestamp` cross a tournament boundary? Such blocks
    /// may be empty: they exist to announce pool rotation and challenger
    /// selection on-chain.
    fn boundary_crossed(&self, timestamp: u64) -> bool {
        self.app.cfg.tournament_index(timestamp) > self.app.cfg.tournament_index(self.app.clock)
    }

    /// Full validation: does this block legally extend our chain, and what
    /// state does it lead to? Does not mutate the node.
    pub fn process_block(
        &self,
        block: &Block,
        retry: u64,
        truth: Option<TruthStream>,
        blobs: &BlobStore,
    ) -> Result<(AppState, Vec<AppEvent>), BlockError> {
        if block.height != self.height + 1 {
            return Err(BlockError::WrongHeight);
        }
        if block.prev != self.head {
            return Err(BlockError::WrongPrev);
        }
        if block.timestamp < self.app.clock {
            return Err(BlockError::NonMonotonicTime);
        }
        if block.txs.is_empty() && !self.boundary_crossed(block.timestamp) {
            return Err(BlockError::EmptyBlock);
        }
        if !block.signature_valid() {
            return Err(BlockError::BadSignature);
        }
        let expected =
            expected_proposer(&self.app, &self.head, block.height, block.timestamp, retry)
                .map_err(BlockError::Selection)?;
        if block.proposer != expected {
            return Err(BlockError::WrongProposer);
        }
        let mut app = self.app.clone();
        let mut events = app.advance(block.timestamp, &self.head);
        let ctx = ApplyCtx {
            now: block.timestamp,
            proposer: block.proposer,
            truth,
            blobs,
        };
        // All-or-nothing: one bad transaction invalidates the whole block.
        for (i, tx) in block.txs.iter().enumerate() {
            match app.apply_tx(tx, &ctx) {
                Ok(mut ev) => events.append(&mut ev),
                Err(e) => return Err(BlockError::InvalidTx(i, e)),
            }
        }
        if app.due_resolution(block.timestamp).is_some() {
            return Err(BlockError::MissingResolution);
        }
        // Winning a block resets the proposer's coin age.
        let _ = app.ledger.reset_coin_age(&block.proposer, block.timestamp);
        Ok((app, events))
    }

    /// Adopt a block the network accepted. `app` must come from
    /// [`NodeState::process_block`] for this block.
    pub fn commit(&mut self, block: &Block, app: AppState) {
        self.app = app;
        self.height = block.height;
        self.head = block.digest();
        let applied: Vec<(AccountId, u64)> = self
            .mempool
            .keys()
            .filter(|(sender, seq)| *seq < self.app.expected_sequence(sender))
            .copied()
            .collect();
        for key in applied {
            self.mempool.remove(&key);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{realtime_test_config, Ratio};
    use crate::ledger::Amount;
    use crate::tx::Uuid;

    fn kp(b: u8) -> KeyPair {
        KeyPair::from_seed(&[b; 32])
    }

    fn genesis_app() -> AppState {
        let cfg = realtime_test_config(40_000, 10_000, 500);
        let allocations: BTreeMap<AccountId, Amount> =
            (1..6u8).map(|b| (kp(b).account(), 1_000)).collect();
        let stakes: BTreeMap<AccountId, (Amount, u64)> =
            (1..6u8).map(|b| (kp(b).account(), (100, 0))).collect();
        AppState::genesis(cfg, &allocations, &stakes).unwrap()
    }

    fn nodes() -> Vec<NodeState> {
        (1..6u8).map(|b| NodeState::new(kp(b), genesis_app())).collect()
    }

    fn truth() -> Option<TruthStream> {
        Some(TruthStream {
            seed: 1,
            bias: Ratio::new(1, 2),
        })
    }

    #[test]
    fn honest_round_reaches_identical_state() {
        let mut nodes = nodes();
        let blobs = BlobStore::new();
        let tx = Transaction::sign(&kp(1), 0, TxBody::SubmitAgent { uuid: Uuid([1; 16]) });
        for n in nodes.iter_mut() {
            n.ingest_tx(tx.clone()).unwrap();
        }
        let proposer =
            expected_proposer(&nodes[0].app, &nodes[0].head, 1, 5_000, 0).unwrap();
        let idx = nodes.iter().position(|n| n.account() == proposer).unwrap();
        let block = nodes[idx].propose(5_000, truth(), &blobs).unwrap();
        assert_eq!(block.txs.len(), 1);
        assert!(block.signature_valid());
        let mut digests = Vec::new();
        for n in nodes.iter_mut() {
            let (app, _) = n.process_block(&block, 0, truth(), &blobs).unwrap();
            digests.push(app.digest());
            n.commit(&block, app);
            assert_eq!(n.height, 1);
            assert!(n.mempool.is_empty());
        }
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
        // The winner's coin age reset; the others' did not.
        let since: Vec<u64> = nodes[0]
            .app
            .ledger
            .stakes
            .values()
            .map(|s| s.since)
            .collect();
        assert_eq!(since.iter().filter(|s| **s == 5_000).count(), 1);
    }

    #[test]
    fn malformed_blocks_are_rejected() {
        let mut nodes = nodes();
        let blobs = BlobStore::new();
        let tx = Transaction::sign(&kp(1), 0, TxBody::SubmitAgent { uuid: Uuid([1; 16]) });
        for n in nodes.iter_mut() {
            n.ingest_tx(tx.clone()).unwrap();
        }
        let proposer =
            expected_proposer(&nodes[0].app, &nodes[0].head, 1, 5_000, 0).unwrap();
        let idx = nodes.iter().position(|n| n.account() == proposer).unwrap();
        let good = nodes[idx].propose(5_000, truth(), &blobs).unwrap();
        let check = |b: &Block| nodes[(idx + 1) % 5].process_block(b, 0, truth(), &blobs);

        let mut wrong_height = good.clone();
        wrong_height.height = 3;
        assert_eq!(check(&wrong_height), Err(BlockError::WrongHeight));

        let mut wrong_prev = good.clone();
        wrong_prev.prev = Digest::ZERO;
        assert_eq!(check(&wrong_prev), Err(BlockError::WrongPrev));

        // Re-signing from a non-selected node trips the proposer check.
        let other = (1..6u8).map(kp).find(|k| k.account() != proposer).unwrap();
        let usurped = Block::sign(&other, 1, good.prev, 5_000, good.txs.clone());
        assert_eq!(check(&usurped), Err(BlockError::WrongProposer));

        let mut bad_sig = good.clone();
        bad_sig.signature[0] ^= 1;
        assert_eq!(check(&bad_sig), Err(BlockError::BadSignature));

        let mut tampered = good.clone();
        tampered.txs[0].sequence = 7;
        assert_eq!(check(&tampered), Err(BlockError::BadSignature));

        let empty = Block::sign(&kp(idx as u8 + 1), 1, good.prev, 5_000, vec![]);
        assert!(matches!(check(&empty), Err(_)));

        assert!(check(&good).is_ok());
    }

    #[test]
    fn block_with_invalid_tx_is_rejected_whole() {
        let nodes = nodes();
        let blobs = BlobStore::new();
        let proposer =
            expected_proposer(&nodes[0].app, &nodes[0].head, 1, 5_000, 0).unwrap();
        let pk = (1..6u8).map(kp).find(|k| k.account() == proposer).unwrap();
        let good = Transaction::sign(&pk, 99, TxBody::SubmitAgent { uuid: Uuid([1; 16]) });
        // Sequence 99 out of order: the whole block must fall.
        let block = Block::sign(&pk, 1, nodes[0].head, 5_000, vec![good]);
        assert_eq!(
            nodes[0].process_block(&block, 0, truth(), &blobs),
            Err(BlockError::InvalidTx(0, TxError::BadSequence))
        );
    }

    #[test]
    fn proposer_must_publish_overdue_resolution() {
        // Run one tournament with a single silent agent past its resolution
        // deadline; a block that omits the verdict is invalid and propose()
        // includes it unprompted.
        let mut nodes = nodes();
        let blobs = BlobStore::new();
        let tx = Transaction::sign(&kp(1), 0, TxBody::SubmitAgent { uuid: Uuid([1; 16]) });
        for n in nodes.iter_mut() {
            n.ingest_tx(tx.clone()).unwrap();
        }
        let p1 = expected_proposer(&nodes[0].app, &nodes[0].head, 1, 5_000, 0).unwrap();
        let i1 = nodes.iter().position(|n| n.account() == p1).unwrap();
        let b1 = nodes[i1].propose(5_000, truth(), &blobs).unwrap();
        for n in nodes.iter_mut() {
            let (app, _) = n.process_block(&b1, 0, truth(), &blobs).unwrap();
            n.commit(&b1, app);
        }
        // Tournament 1 runs 40_000..80_000 with no signals; resolution due
        // at 90_000.
        let p2 = expected_proposer(&nodes[0].app, &nodes[0].head, 2, 95_000, 0).unwrap();
        let i2 = nodes.iter().position(|n| n.account() == p2).unwrap();
        let spam = Transaction::sign(
            &kp(2),
            nodes[i2].app.expected_sequence(&kp(2).account()),
            TxBody::SubmitAgent { uuid: Uuid([2; 16]) },
        );
        let no_verdict = Block::sign(
            (1..6u8).map(kp).find(|k| k.account() == p2).as_ref().unwrap(),
            2,
            nodes[i2].head,
            95_000,
            vec![spam],
        );
        assert_eq!(
            nodes[i2].process_block(&no_verdict, 0, truth(), &blobs),
            Err(BlockError::MissingResolution)
        );
        let with_verdict = nodes[i2].propose(95_000, truth(), &blobs).unwrap();
        assert!(with_verdict
            .txs
            .iter()
            .any(|t| matches!(t.body, TxBody::PublishTournamentRanking { .. })));
        let mut digests = Vec::new();
        for n in nodes.iter_mut() {
            let (app, events) = n.process_block(&with_verdict, 0, truth(), &blobs).unwrap();
            assert!(events
                .iter()
                .any(|e| matches!(e, AppEvent::TournamentResolved { index: 1, .. })));
            digests.push(app.digest());
            n.commit(&with_verdict, app);
        }
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn stale_and_duplicate_txs_stay_out_of_the_mempool() {
        let mut node = nodes().remove(0);
        let tx = Transaction::sign(&kp(1), 0, TxBody::SubmitAgent { uuid: Uuid([1; 16]) });
        node.ingest_tx(tx.clone()).unwrap();
        assert_eq!(node.ingest_tx(tx.clone()), Err(TxError::Duplicate));
        let mut forged = tx.clone();
        forged.sequence = 1;
        assert_eq!(node.ingest_tx(forged), Err(TxError::BadSignature));
        assert_eq!(node.next_emit_sequence(), 1);
    }
}
