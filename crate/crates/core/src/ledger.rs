//! Fixed-supply domain token ledger: balances, coin-age stakes, and the
//! tournament reward pools fed by protocol fees.
//!
//! Conservation is the load-bearing invariant: after every operation,
//! `sum(balances) + sum(stakes) + currentPool + nextPool == totalSupply`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canon, Enc};
use crate::config::MS_PER_DAY;
use crate::crypto::AccountId;

pub type Amount = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("stake exceeds the account's allocation")]
    InsufficientAllocation,
    #[error("account has no stake")]
    NoStake,
    #[error("token arithmetic overflow")]
    Overflow,
}

/// Which fee a receipt records; failure refunds only agent-submission and
/// data-publish fees, the others always stay in the pool.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum FeeKind {
    AgentSubmission,
    DataPublish,
    PricePublish,
    Rent,
}

impl FeeKind {
    pub fn refundable(&self) -> bool {
        matches!(self, FeeKind::AgentSubmission | FeeKind::DataPublish)
    }

    fn tag(&self) -> u8 {
        match self {
            FeeKind::AgentSubmission => 1,
            FeeKind::DataPublish => 2,
            FeeKind::PricePublish => 3,
            FeeKind::Rent => 4,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FeeReceipt {
    pub payer: AccountId,
    pub amount: Amount,
    pub kind: FeeKind,
}

impl Canon for FeeReceipt {
    fn encode(&self, e: &mut Enc) {
        self.payer.encode(e);
        e.u64(self.amount);
        e.u8(self.kind.tag());
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct StakeRecord {
    pub amount: Amount,
    /// Coin-age epoch: timestamp of the last stake change or block win.
    pub since: u64,
}

impl Canon for StakeRecord {
    fn encode(&self, e: &mut Enc) {
        e.u64(self.amount);
        e.u64(self.since);
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LedgerState {
    pub balances: BTreeMap<AccountId, Amount>,
    pub stakes: BTreeMap<AccountId, StakeRecord>,
    pub current_reward_pool: Amount,
    pub next_reward_pool: Amount,
    pub total_supply: Amount,
    /// Receipts backing `next_reward_pool`; drained at pool rotation and
    /// attached to the starting tournament for the failure-refund path.
    pub next_receipts: Vec<FeeReceipt>,
}

impl LedgerState {
    /// Build the genesis ledger. Total supply is the sum of allocations;
    /// staked amounts are moved out of the spendable balances.
    pub fn genesis(
        allocations: &BTreeMap<AccountId, Amount>,
        stakes: &BTreeMap<AccountId, (Amount, u64)>,
    ) -> Result<LedgerState, LedgerError> {
        let mut total: Amount = 0;
        for v in allocations.values() {
            total = total.checked_add(*v).ok_or(LedgerError::Overflow)?;
        }
        let mut balances = allocations.clone();
        let mut stake_map = BTreeMap::new();
        for (account, (amount, since)) in stakes {
            if *amount == 0 {
                continue;
            }
            let bal = balances.get_mut(account).ok_or(LedgerError::InsufficientAllocation)?;
            if *bal < *amount {
                return Err(LedgerError::InsufficientAllocation);
            }
            *bal -= *amount;
            stake_map.insert(
                *account,
                StakeRecord {
                    amount: *amount,
                    since: *since,
                },
            );
        }
        Ok(LedgerState {
            balances,
            stakes: stake_map,
            current_reward_pool: 0,
            next_reward_pool: 0,
            total_supply: total,
            next_receipts: Vec::new(),
        })
    }

    /// Coin-age consensus power: stake amount times whole days since the
    /// stake epoch, clamped to a minimum factor of 1 so fresh stakers stay
    /// selectable.
    pub fn consensus_power(&self, account: &AccountId, now: u64) -> u128 {
        match self.stakes.get(account) {
            None => 0,
            Some(s) => {
                let days = now.saturating_sub(s.since) / MS_PER_DAY;
                s.amount as u128 * days.max(1) as u128
            }
        }
    }

    pub fn powers(&self, now: u64) -> BTreeMap<AccountId, u128> {
        self.stakes
            .keys()
            .map(|a| (*a, self.consensus_power(a, now)))
            .collect()
    }

    pub fn total_power(&self, now: u64) -> u128 {
        self.stakes.keys().map(|a| self.consensus_power(a, now)).sum()
    }

    /// Reset the coin-age timer (stake change or block win).
    pub fn reset_coin_age(&mut self, account: &AccountId, now: u64) -> Result<(), LedgerError> {
        let stake = self.stakes.get_mut(account).ok_or(LedgerError::NoStake)?;
        stake.since = now;
        Ok(())
    }

    pub fn balance(&self, account: &AccountId) -> Amount {
        self.balances.get(account).copied().unwrap_or(0)
    }

    /// Debit a fee into the next tournament's reward pool, with a receipt.
    pub fn charge_fee(
        &mut self,
        account: &AccountId,
        amount: Amount,
        kind: FeeKind,
    ) -> Result<(), LedgerError> {
        let bal = self.balances.get(account).copied().unwrap_or(0);
        if bal < amount {
            return Err(LedgerError::InsufficientBalance);
        }
        let new_pool = self
            .next_reward_pool
            .checked_add(amount)
            .ok_or(LedgerError::Overflow)?;
        if amount == 0 {
            return Ok(());
        }
        self.balances.insert(*account, bal - amount);
        self.next_reward_pool = new_pool;
        self.next_receipts.push(FeeReceipt {
            payer: *account,
            amount,
            kind,
        });
        Ok(())
    }

    /// Direct balance transfer (rent payments to sellers).
    pub fn transfer(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        amount: Amount,
    ) -> Result<(), LedgerError> {
        let from_bal = self.balances.get(from).copied().unwrap_or(0);
        if from_bal < amount {
            return Err(LedgerError::InsufficientBalance);
        }
        if from == to {
            return Ok(());
        }
        let to_bal = self.balances.get(to).copied().unwrap_or(0);
        let to_new = to_bal.checked_add(amount).ok_or(LedgerError::Overflow)?;
        self.balances.insert(*from, from_bal - amount);
        self.balances.insert(*to, to_new);
        Ok(())
    }

    /// Tournament-start rotation: everything accrued for the next
    /// tournament (fees, remainders, rollovers) becomes the starting
    /// tournament's spendable pool. Returns the pool size and the fee
    /// receipts backing it. `current_reward_pool` tracks the sum of all
    /// unresolved tournament pools.
    pub fn rotate_pools(&mut self) -> (Amount, Vec<FeeReceipt>) {
        let amount = self.next_reward_pool;
        self.current_reward_pool += amount;
        self.next_reward_pool = 0;
        (amount, std::mem::take(&mut self.next_receipts))
    }

    /// Pay out of the current reward pool.
    pub fn pay_from_pool(&mut self, to: &AccountId, amount: Amount) -> Result<(), LedgerError> {
        if self.current_reward_pool < amount {
            return Err(LedgerError::InsufficientBalance);
        }
        let bal = self.balances.get(to).copied().unwrap_or(0);
        let new = bal.checked_add(amount).ok_or(LedgerError::Overflow)?;
        self.current_reward_pool -= amount;
        self.balances.insert(*to, new);
        Ok(())
    }

    /// Move an unspent slice of the current pool into the next
    /// tournament's fund (zero-agent rollover and split remainders).
    pub fn return_to_next(&mut self, amount: Amount) -> Result<(), LedgerError> {
        if self.current_reward_pool < amount {
            return Err(LedgerError::InsufficientBalance);
        }
        self.current_reward_pool -= amount;
        self.next_reward_pool += amount;
        Ok(())
    }

    pub fn conservation_holds(&self) -> bool {
        let mut sum: u128 = 0;
        sum += self.balances.values().map(|v| *v as u128).sum::<u128>();
        sum += self.stakes.values().map(|s| s.amount as u128).sum::<u128>();
        sum += self.current_reward_pool as u128 + self.next_reward_pool as u128;
        sum == self.total_supply as u128
    }
}

impl Canon for LedgerState {
    fn encode(&self, e: &mut Enc) {
        self.balances.encode(e);
        self.stakes.encode(e);
        e.u64(self.current_reward_pool);
        e.u64(self.next_reward_pool);
        e.u64(self.total_supply);
        self.next_receipts.encode(e);
    }
}

#[cfg(test)]
pub(crate) fn acct(b: u8) -> AccountId {
    crate::crypto::KeyPair::from_seed(&[b; 32]).account()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple_genesis() -> LedgerState {
        let a = acct(1);
        let allocations = BTreeMap::from([(a, 1000)]);
        let stakes = BTreeMap::from([(a, (400, 0))]);
        LedgerState::genesis(&allocations, &stakes).unwrap()
    }

    #[test]
    fn genesis_moves_stakes_out_of_balances() {
        let ledger = simple_genesis();
        assert_eq!(ledger.balance(&acct(1)), 600);
        assert_eq!(ledger.stakes[&acct(1)].amount, 400);
        assert_eq!(ledger.total_supply, 1000);
        assert!(ledger.conservation_holds());
    }

    #[test]
    fn genesis_without_stakes() {
        let allocations = BTreeMap::from([(acct(1), 100), (acct(2), 100)]);
        let ledger = LedgerState::genesis(&allocations, &BTreeMap::new()).unwrap();
        assert_eq!(ledger.total_supply, 200);
        assert!(ledger.stakes.is_empty());
    }

    #[test]
    fn genesis_rejects_overdrawn_stake() {
        let allocations = BTreeMap::from([(acct(1), 100)]);
        let stakes = BTreeMap::from([(acct(1), (200, 0))]);
        assert_eq!(
            LedgerState::genesis(&allocations, &stakes),
            Err(LedgerError::InsufficientAllocation)
        );
    }

    #[test]
    fn consensus_power_is_stake_times_whole_days() {
        let ledger = {
            let allocations = BTreeMap::from([(acct(1), 100)]);
            let stakes = BTreeMap::from([(acct(1), (100, 0))]);
            LedgerState::genesis(&allocations, &stakes).unwrap()
        };
        assert_eq!(ledger.consensus_power(&acct(1), 3 * MS_PER_DAY), 300);
        assert_eq!(ledger.consensus_power(&acct(2), 3 * MS_PER_DAY), 0);
        // One hour old: zero whole days, clamped to the minimum factor 1.
        assert_eq!(ledger.consensus_power(&acct(1), 3_600_000), 100);
    }

    #[test]
    fn power_monotone_between_resets() {
        let ledger = simple_genesis();
        let mut last = 0;
        for day in 0..30 {
            let p = ledger.consensus_power(&acct(1), day * MS_PER_DAY);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn reset_coin_age_drops_power_to_minimum() {
        let mut ledger = simple_genesis();
        let t = 5 * MS_PER_DAY;
        assert_eq!(ledger.consensus_power(&acct(1), t), 2000);
        ledger.reset_coin_age(&acct(1), t).unwrap();
        assert_eq!(ledger.consensus_power(&acct(1), t), 400);
        // Idempotent at the same timestamp.
        ledger.reset_coin_age(&acct(1), t).unwrap();
        assert_eq!(ledger.consensus_power(&acct(1), t), 400);
        assert_eq!(ledger.reset_coin_age(&acct(9), t), Err(LedgerError::NoStake));
    }

    #[test]
    fn charge_fee_feeds_next_pool() {
        let mut ledger = simple_genesis();
        ledger.charge_fee(&acct(1), 50, FeeKind::AgentSubmission).unwrap();
        assert_eq!(ledger.balance(&acct(1)), 550);
        assert_eq!(ledger.next_reward_pool, 50);
        assert!(ledger.conservation_holds());
        // Zero fee is a no-op.
        let before = ledger.clone();
        ledger.charge_fee(&acct(1), 0, FeeKind::Rent).unwrap();
        assert_eq!(ledger, before);
        assert_eq!(
            ledger.charge_fee(&acct(1), 10_000, FeeKind::Rent),
            Err(LedgerError::InsufficientBalance)
        );
    }

    #[test]
    fn rotation_moves_next_into_current() {
        let mut ledger = simple_genesis();
        ledger.charge_fee(&acct(1), 120, FeeKind::AgentSubmission).unwrap();
        let (pool, receipts) = ledger.rotate_pools();
        assert_eq!(pool, 120);
        assert_eq!(ledger.current_reward_pool, 120);
        assert_eq!(ledger.next_reward_pool, 0);
        assert_eq!(receipts.len(), 1);
        // Zero-agent rollover: unspent pool merges forward.
        ledger.return_to_next(120).unwrap();
        ledger.rotate_pools();
        assert_eq!(ledger.current_reward_pool, 120);
        // Two rotations with no fees keep the pools put.
        ledger.rotate_pools();
        assert_eq!((ledger.current_reward_pool, ledger.next_reward_pool), (120, 0));
        assert!(ledger.conservation_holds());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Fee(u8, Amount),
        Reset(u8, u64),
        Rotate,
        Pay(u8, Amount),
        Carry,
        Transfer(u8, u8, Amount),
    }

    fn op_strategy() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u8..4, 0u64..500).prop_map(|(a, v)| Op::Fee(a, v)),
            (0u8..4, 0u64..10 * MS_PER_DAY).prop_map(|(a, t)| Op::Reset(a, t)),
            Just(Op::Rotate),
            (0u8..4, 0u64..500).prop_map(|(a, v)| Op::Pay(a, v)),
            Just(Op::Carry),
            (0u8..4, 0u8..4, 0u64..500).prop_map(|(a, b, v)| Op::Transfer(a, b, v)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]
        #[test]
        fn conservation_over_random_op_sequences(ops in proptest::collection::vec(op_strategy(), 1..40)) {
            let allocations = BTreeMap::from([(acct(0), 1000), (acct(1), 1000), (acct(2), 1000), (acct(3), 1000)]);
            let stakes = BTreeMap::from([(acct(0), (300, 0)), (acct(1), (100, 0))]);
            let mut ledger = LedgerState::genesis(&allocations, &stakes).unwrap();
            for op in ops {
                let before = ledger.clone();
                let result = match op {
                    Op::Fee(a, v) => ledger.charge_fee(&acct(a), v, FeeKind::AgentSubmission),
                    Op::Reset(a, t) => ledger.reset_coin_age(&acct(a), t),
                    Op::Rotate => { ledger.rotate_pools(); Ok(()) }
                    Op::Pay(a, v) => ledger.pay_from_pool(&acct(a), v),
                    Op::Carry => ledger.return_to_next(ledger.current_reward_pool),
                    Op::Transfer(a, b, v) => ledger.transfer(&acct(a), &acct(b), v),
                };
                if result.is_err() {
                    // Error paths must leave the ledger untouched.
                    prop_assert_eq!(&ledger, &before);
                }
                prop_assert!(ledger.conservation_holds());
            }
        }
    }
}
