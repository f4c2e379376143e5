//! Proof-of-Vote ledger.
//!
//! Commissioners vote on blocks; butlers produce them. A block commits only
//! with signed votes from more than half of the committee, and each
//! commissioner votes for at most one block per height, so two blocks at the
//! same height can never both commit. At the end of every term the butler
//! set is re-elected from the candidate pool by confidence tally.

mod block;
mod genesis;
mod state;

pub use block::{
    supersede_payload, Approval, Block, Rejection, Transaction, TxKind, TxReject, Vote,
};
pub use genesis::{Genesis, GenesisError, Member};
pub use state::{is_majority, ChainState, Commissioner, TermState, VoteDecision};

use thiserror::Error;

pub type NodeId = u32;

pub const DEFAULT_TERM_LENGTH: u64 = 64;
pub const DEFAULT_BUTLER_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRole {
    Commissioner,
    Butler,
    ButlerCandidate,
    Ordinary,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PovError {
    #[error("node {0} is not the scheduled producer")]
    NotScheduled(NodeId),
    #[error("block needs more than half of {committee} votes, has {valid}")]
    InsufficientVotes { valid: usize, committee: usize },
    #[error("block does not extend the chain tip")]
    BadChainLink,
    #[error("term not over: {done} of {length} blocks")]
    TermNotOver { done: u64, length: u64 },
    #[error("block carries an invalid transaction: {0:?}")]
    InvalidTransaction(TxReject),
    #[error("wrong term number")]
    WrongTerm,
}
