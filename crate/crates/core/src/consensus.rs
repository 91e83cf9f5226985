//! Coin-age weighted selection of block proposers and tournament
//! challengers, and the block acceptance threshold.
//!
//! Randomness comes from a counter-mode digest expansion of a seed mixed
//! from the chain prefix, so every node derives the same choices. No
//! platform PRNG is involved anywhere on the consensus path.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::codec::{digest_bytes, Canon, Digest, Enc};
use crate::config::Ratio;
use crate::crypto::AccountId;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum SelectionError {
    #[error("no account with positive consensus power")]
    NoEligibleProposer,
    #[error("eligible pool exhausted before challenger constraints were met")]
    SelectionImpossible,
}

/// Seed for one selection: previous block digest, height, purpose tag, and
/// a retry counter for re-selection after a rejected block.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SelectionSeed(pub Digest);

impl SelectionSeed {
    pub fn new(prev: &Digest, height: u64, purpose: &str, retry: u64) -> SelectionSeed {
        let mut e = Enc::new();
        prev.encode(&mut e);
        e.u64(height);
        e.str(purpose);
        e.u64(retry);
        SelectionSeed(digest_bytes(&e.finish()))
    }
}

/// Deterministic byte stream: SHA-256(seed ‖ counter) blocks.
pub struct DetRng {
    seed: Digest,
    counter: u64,
    block: [u8; 32],
    pos: usize,
}

impl DetRng {
    pub fn new(seed: Digest) -> DetRng {
        DetRng {
            seed,
            counter: 0,
            block: [0; 32],
            pos: 32,
        }
    }

    pub fn from_parts(parts: &[&[u8]]) -> DetRng {
        DetRng::new(crate::codec::digest_parts(parts))
    }

    fn refill(&mut self) {
        let mut e = Enc::new();
        self.seed.encode(&mut e);
        e.u64(self.counter);
        self.counter += 1;
        self.block = *digest_bytes(&e.finish()).as_bytes();
        self.pos = 0;
    }

    pub fn next_byte(&mut self) -> u8 {
        if self.pos >= 32 {
            self.refill();
        }
        let b = self.block[self.pos];
        self.pos += 1;
        b
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut v = 0u64;
        for _ in 0..8 {
            v = (v << 8) | self.next_byte() as u64;
        }
        v
    }

    pub fn next_u128(&mut self) -> u128 {
        (self.next_u64() as u128) << 64 | self.next_u64() as u128
    }

    /// Uniform draw in `[0, n)` by rejection sampling.
    pub fn below(&mut self, n: u128) -> u128 {
        assert!(n > 0);
        let zone = u128::MAX - (u128::MAX % n);
        loop {
            let v = self.next_u128();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn next_bool(&mut self, p: Ratio) -> bool {
        self.below(p.den as u128) < p.num as u128
    }

    /// Deterministic Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below((i + 1) as u128) as usize;
            items.swap(i, j);
        }
    }
}

/// One weighted draw over a sorted power map. Probability of each account
/// is proportional to its power.
fn weighted_draw(powers: &BTreeMap<AccountId, u128>, rng: &mut DetRng) -> Option<AccountId> {
    let total: u128 = powers.values().sum();
    if total == 0 {
        return None;
    }
    let mut x = rng.below(total);
    for (account, power) in powers {
        if x < *power {
            return Some(*account);
        }
        x -= power;
    }
    None
}

/// Select the block proposer with probability proportional to power.
pub fn select_proposer(
    powers: &BTreeMap<AccountId, u128>,
    seed: SelectionSeed,
) -> Result<AccountId, SelectionError> {
    let mut rng = DetRng::new(seed.0);
    weighted_draw(powers, &mut rng).ok_or(SelectionError::NoEligibleProposer)
}

/// Challenger set with its selection-time power snapshot.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChallengerSet {
    /// Selection order.
    pub members: Vec<AccountId>,
    pub powers: BTreeMap<AccountId, u128>,
}

impl ChallengerSet {
    pub fn total_power(&self) -> u128 {
        self.powers.values().sum()
    }

    pub fn contains(&self, account: &AccountId) -> bool {
        self.powers.contains_key(account)
    }

    pub fn power_of(&self, account: &AccountId) -> u128 {
        self.powers.get(account).copied().unwrap_or(0)
    }
}

impl Canon for ChallengerSet {
    fn encode(&self, e: &mut Enc) {
        self.members.encode(e);
        self.powers.encode(e);
    }
}

fn constraints_met(
    set: &ChallengerSet,
    min_count: u64,
    min_share: Ratio,
    total_network_power: u128,
) -> bool {
    if (set.members.len() as u64) < min_count {
        return false;
    }
    let sum = set.total_power();
    // sum / total >= num / den, in integer arithmetic.
    if sum * (min_share.den as u128) < total_network_power * (min_share.num as u128) {
        return false;
    }
    // Nobody may hold more than 10% of the challenger power.
    set.powers.values().all(|p| p * 10 <= sum)
}

/// Weighted sampling without replacement from the non-miner accounts,
/// drawing until the challenger constraints hold.
pub fn select_challengers(
    powers: &BTreeMap<AccountId, u128>,
    seed: SelectionSeed,
    min_count: u64,
    min_share: Ratio,
    participating_miners: &BTreeSet<AccountId>,
) -> Result<ChallengerSet, SelectionError> {
    let total_network_power: u128 = powers.values().sum();
    let mut pool: BTreeMap<AccountId, u128> = powers
        .iter()
        .filter(|(a, p)| !participating_miners.contains(a) && **p > 0)
        .map(|(a, p)| (*a, *p))
        .collect();
    let mut rng = DetRng::new(seed.0);
    let mut set = ChallengerSet {
        members: Vec::new(),
        powers: BTreeMap::new(),
    };
    loop {
        if constraints_met(&set, min_count, min_share, total_network_power) {
            return Ok(set);
        }
        let Some(pick) = weighted_draw(&pool, &mut rng) else {
            return Err(SelectionError::SelectionImpossible);
        };
        let power = pool.remove(&pick).unwrap_or(0);
        set.members.push(pick);
        set.powers.insert(pick, power);
    }
}

/// Strict >2/3 power threshold for block acceptance.
pub fn block_accepted(voted_power: u128, total_power: u128) -> bool {
    voted_power * 3 > total_power * 2
}
