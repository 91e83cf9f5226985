//! A self-contained Boolean prediction domain so tournaments have something
//! real to rank: truth streams, validation datasets, scripted agents, and
//! the accuracy/baseline metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{digest_of, Canon, Digest, Enc};
use crate::config::Ratio;
use crate::consensus::DetRng;
use crate::score::Score;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ToyError {
    #[error("prediction and truth lists differ in length")]
    LengthMismatch,
    #[error("truth list is empty")]
    EmptyTruth,
    #[error("dataset size must be at least 1")]
    EmptyDataset,
}

/// Seed-deterministic stream of Boolean outcomes, one per tick.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TruthStream {
    pub seed: u64,
    /// Probability that a tick's outcome is `true`.
    pub bias: Ratio,
}

impl TruthStream {
    pub fn outcome(&self, tick: u64) -> bool {
        let mut rng = DetRng::from_parts(&[b"truth", &self.seed.to_be_bytes(), &tick.to_be_bytes()]);
        rng.next_bool(self.bias)
    }
}

/// A validation dataset: opaque feature rows and their Boolean outputs.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ToyDataset {
    pub inputs: Vec<Vec<u8>>,
    pub outputs: Vec<bool>,
}

impl ToyDataset {
    pub fn size(&self) -> usize {
        self.outputs.len()
    }

    pub fn inputs_digest(&self) -> Digest {
        digest_of(&self.inputs)
    }

    pub fn outputs_bytes(&self) -> Vec<u8> {
        let mut e = Enc::new();
        self.outputs.encode(&mut e);
        e.finish()
    }

    pub fn outputs_from_bytes(data: &[u8]) -> Option<Vec<bool>> {
        if data.len() < 4 {
            return None;
        }
        let n = u32::from_be_bytes(data[..4].try_into().ok()?) as usize;
        if data.len() != 4 + n {
            return None;
        }
        data[4..].iter().map(|b| match b {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        }).collect()
    }
}

/// Deterministic dataset with an exact class balance: exactly
/// `round(balance * size)` positive outputs, positions shuffled by the seed.
pub fn generate_dataset(seed: &Digest, size: usize, balance: Ratio) -> Result<ToyDataset, ToyError> {
    if size == 0 {
        return Err(ToyError::EmptyDataset);
    }
    let positives =
        ((balance.num as u128 * size as u128 + balance.den as u128 / 2) / balance.den as u128) as usize;
    let positives = positives.min(size);
    let mut outputs: Vec<bool> = (0..size).map(|i| i < positives).collect();
    let mut rng = DetRng::from_parts(&[b"dataset", seed.as_bytes()]);
    rng.shuffle(&mut outputs);
    let inputs = (0..size)
        .map(|i| {
            let mut e = Enc::new();
            seed.encode(&mut e);
            e.u64(i as u64);
            crate::codec::digest_bytes(&e.finish()).as_bytes()[..8].to_vec()
        })
        .collect();
    Ok(ToyDataset { inputs, outputs })
}

/// Fraction of cases predicted correctly, as an exact rational.
pub fn accuracy(predictions: &[bool], truth: &[bool]) -> Result<Score, ToyError> {
    if predictions.len() != truth.len() {
        return Err(ToyError::LengthMismatch);
    }
    if truth.is_empty() {
        return Err(ToyError::EmptyTruth);
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(Score::new(correct as u64, truth.len() as u64))
}

/// Best accuracy achievable by predicting a constant value.
pub fn baseline(truth: &[bool]) -> Result<Score, ToyError> {
    if truth.is_empty() {
        return Err(ToyError::EmptyTruth);
    }
    let trues = truth.iter().filter(|t| **t).count();
    let falses = truth.len() - trues;
    Ok(Score::new(trues.max(falses) as u64, truth.len() as u64))
}

/// Scripted agent policies. The misbehaving variants live here because they
/// are agent policies, not network faults.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AgentBehavior {
    /// Always predicts the given value.
    Constant(bool),
    /// Predicts the true outcome with probability exactly p.
    NoisyOracle(Ratio),
    /// Re-submits the named agent's ciphertext and later its revealed key.
    Copycat(String),
    /// Never submits a signal.
    Silent,
    /// Reveals its decryption keys well outside the tolerance window.
    LateRevealer,
    /// Encrypts every signal with the same AES key.
    KeyReuser,
    /// Seals envelopes with a commitment hash that lies about the payload.
    BadCommit,
}

impl AgentBehavior {
    /// Whether this behavior ever produces its own predictions.
    pub fn predicts(&self) -> bool {
        !matches!(self, AgentBehavior::Copycat(_) | AgentBehavior::Silent)
    }
}

/// One prediction for a single case. Deterministic in (seed, case key).
pub fn agent_respond(behavior: &AgentBehavior, truth: bool, seed: &Digest, case: &[u8]) -> bool {
    match behavior {
        AgentBehavior::Constant(b) => *b,
        AgentBehavior::NoisyOracle(p) => {
            let mut rng = DetRng::from_parts(&[b"agent", seed.as_bytes(), case]);
            if rng.next_bool(*p) {
                truth
            } else {
                !truth
            }
        }
        // Misbehaving policies still emit predictions; their envelopes or
        // timing are what goes wrong, and disqualification handles them.
        AgentBehavior::LateRevealer | AgentBehavior::KeyReuser | AgentBehavior::BadCommit => truth,
        AgentBehavior::Copycat(_) | AgentBehavior::Silent => truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::digest_bytes;
    use proptest::prelude::*;

    #[test]
    fn datasets_are_seed_deterministic() {
        let seed = digest_bytes(b"seed");
        let a = generate_dataset(&seed, 50, Ratio::new(1, 2)).unwrap();
        let b = generate_dataset(&seed, 50, Ratio::new(1, 2)).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&digest_bytes(b"other"), 50, Ratio::new(1, 2)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn class_balance_is_exact() {
        // Counting oracle: exactly round(balance * size) positives.
        let seed = digest_bytes(b"balance");
        let d = generate_dataset(&seed, 100, Ratio::new(7, 10)).unwrap();
        assert_eq!(d.outputs.iter().filter(|b| **b).count(), 70);
        assert_eq!(generate_dataset(&seed, 0, Ratio::new(1, 2)), Err(ToyError::EmptyDataset));
    }

    #[test]
    fn outputs_wire_roundtrip() {
        let seed = digest_bytes(b"wire");
        let d = generate_dataset(&seed, 20, Ratio::new(1, 3)).unwrap();
        assert_eq!(
            ToyDataset::outputs_from_bytes(&d.outputs_bytes()),
            Some(d.outputs.clone())
        );
        assert_eq!(ToyDataset::outputs_from_bytes(&[1, 2, 3]), None);
    }

    #[test]
    fn accuracy_counts_matches() {
        let t = vec![true, false, true, true];
        assert_eq!(accuracy(&t, &t).unwrap(), Score::ONE);
        let inv: Vec<bool> = t.iter().map(|b| !b).collect();
        assert_eq!(accuracy(&inv, &t).unwrap(), Score::ZERO);
        // 78 of 100 correct reduces to 39/50.
        let truth = vec![true; 100];
        let mut preds = vec![true; 100];
        for p in preds.iter_mut().take(22) {
            *p = false;
        }
        assert_eq!(accuracy(&preds, &truth).unwrap(), Score::new(39, 50));
        assert_eq!(accuracy(&[true], &[true, false]), Err(ToyError::LengthMismatch));
    }

    #[test]
    fn baseline_is_majority_class() {
        assert_eq!(baseline(&[true, true, true, false]).unwrap(), Score::new(3, 4));
        let mut t = vec![false; 70];
        t.extend(vec![true; 30]);
        assert_eq!(baseline(&t).unwrap(), Score::new(7, 10));
        assert_eq!(baseline(&[true, true]).unwrap(), Score::ONE);
        assert_eq!(baseline(&[]), Err(ToyError::EmptyTruth));
    }

    #[test]
    fn noisy_oracle_hits_its_rate() {
        // Monte-Carlo oracle: p = 9/10 over 10_000 cases, binomial 3-sigma
        // bound is 90 hits wide.
        let truth = TruthStream { seed: 5, bias: Ratio::new(1, 2) };
        let behavior = AgentBehavior::NoisyOracle(Ratio::new(9, 10));
        let seed = digest_bytes(b"noisy");
        let mut correct = 0;
        for tick in 0..10_000u64 {
            let t = truth.outcome(tick);
            if agent_respond(&behavior, t, &seed, &tick.to_be_bytes()) == t {
                correct += 1;
            }
        }
        assert!((9000 - 100..=9000 + 100).contains(&correct), "correct = {correct}");
    }

    #[test]
    fn constant_agent_is_constant() {
        let seed = digest_bytes(b"const");
        for tick in 0..20u64 {
            assert!(agent_respond(&AgentBehavior::Constant(true), false, &seed, &tick.to_be_bytes()));
        }
    }

    proptest! {
        #[test]
        fn baseline_at_least_half(truth in proptest::collection::vec(any::<bool>(), 1..200)) {
            let b = baseline(&truth).unwrap();
            prop_assert!(b >= Score::new(1, 2));
        }

        #[test]
        fn self_accuracy_is_one(truth in proptest::collection::vec(any::<bool>(), 1..200)) {
            prop_assert_eq!(accuracy(&truth, &truth).unwrap(), Score::ONE);
        }
    }
}
