//! Deterministic desk-scale implementation of a tournament-verification
//! blockchain domain: token ledger, coin-age consensus, commit-reveal
//! signals, the ten protocol transactions, a replicated state machine, and
//! a discrete-event multi-node simulator.

pub mod app;
pub mod blob;
pub mod codec;
pub mod config;
pub mod consensus;
pub mod crypto;
pub mod ledger;
pub mod node;
pub mod report;
pub mod score;
pub mod sim;
pub mod tournament;
pub mod toy;
pub mod tx;

pub use codec::Digest;
pub use crypto::AccountId;
