//! Value types, channel state and the residual-balance accounting rules.

mod graph;
pub mod snapshot;
mod units;

pub use graph::{
    total_funds, Channel, ChannelId, ContractId, FeePolicy, Lock, NetworkGraph, NodeId, Payout, Side,
};
pub use units::{parse_decimal, Amount, Minutes, PenaltyRate};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("amount underflow: {lhs} - {rhs}")]
    Underflow { lhs: Amount, rhs: Amount },
    #[error("insufficient balance on {channel}: {available} available, {requested} requested")]
    InsufficientBalance {
        channel: ChannelId,
        available: Amount,
        requested: Amount,
    },
    #[error("contract {0} is not locked in this channel")]
    UnknownContract(ContractId),
    #[error("payout of {paid} for contract {contract} does not match locked {locked}")]
    IllegalOutcome {
        contract: ContractId,
        locked: Amount,
        paid: Amount,
    },
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("channel {0} already exists")]
    DuplicateChannel(ChannelId),
    #[error("channel {0} connects a node to itself")]
    SelfLoop(ChannelId),
    #[error("channel {0} has been closed on-chain")]
    ChannelClosed(ChannelId),
    #[error("penalty rate {0} outside [0, 1]")]
    RateOutOfRange(String),
    #[error("{0}")]
    Parse(String),
}
