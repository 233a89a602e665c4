//! Conditional contracts and their resolution rules.
//!
//! Four kinds are modelled: the legacy HTLC, the single-contract penalty
//! variant HTLC1.0, and the GP pair of a cancellation contract (the payee's
//! penalty deposit) and a payment contract. Every contract has one
//! `offerer`, whose `amount` is locked, and one `counterparty`. For a
//! cancellation contract the offerer is the downstream node `U_{i+1}`.

mod hash;
pub mod script;

pub use hash::{sample_preimage_pair, Digest, Preimage};
pub use script::{render_script_template, Script};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Amount, ChannelId, ContractId, Minutes, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    Htlc,
    Htlc1,
    GpCancellation,
    GpPayment,
}

impl fmt::Display for ContractKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractKind::Htlc => "htlc",
            ContractKind::Htlc1 => "htlc1",
            ContractKind::GpCancellation => "gp_cancellation",
            ContractKind::GpPayment => "gp_payment",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractStatus {
    Proposed,
    Accepted,
    SettledPayment,
    SettledCancellation,
    TimedOutPenalty,
    TimedOutRefund,
}

impl ContractStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, ContractStatus::Proposed | ContractStatus::Accepted)
    }
}

/// What a party presents to settle a contract.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    /// Preimage of the payment hash.
    PreimageX(Preimage),
    /// Preimage of the cancellation hash.
    PreimageR(Preimage),
    /// Unilateral claim once the locktime has passed.
    TimeoutClaim,
    /// Off-chain agreement to close without a preimage, with the amount the
    /// requester pays the other side.
    MutualTermination { compensation: Amount },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("preimage does not match the contract hash")]
    WrongPreimage,
    #[error("timeout claim at {now} before locktime {locktime}")]
    TooEarly { now: Minutes, locktime: Minutes },
    #[error("contract already settled")]
    AlreadyTerminal,
    #[error("contract has not been accepted")]
    NotAccepted,
    #[error("preimage presented at {now}, after locktime {locktime}")]
    Expired { now: Minutes, locktime: Minutes },
    #[error("compensation {offered} below required {required}")]
    InsufficientCompensation { offered: Amount, required: Amount },
    #[error("{0} contract needs a cancellation hash")]
    MissingHash(ContractKind),
    #[error("contract amount must be positive")]
    ZeroAmount,
    #[error("locktime {locktime} is not after {now}")]
    ExpiredLocktime { now: Minutes, locktime: Minutes },
    #[error("no script template for {0} contracts")]
    UnsupportedKind(ContractKind),
}

/// Terms of a contract before it is proposed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractTerms {
    pub kind: ContractKind,
    pub channel: ChannelId,
    pub offerer: NodeId,
    pub counterparty: NodeId,
    pub amount: Amount,
    /// Counterparty deposit; only HTLC1.0 uses it.
    pub penalty: Amount,
    pub payment_hash: Digest,
    pub cancellation_hash: Option<Digest>,
    pub locktime: Minutes,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Contract {
    pub id: ContractId,
    pub terms: ContractTerms,
    pub status: ContractStatus,
}

/// Result of a successful resolution: who receives what out of the locked
/// funds. `penalty` is the part paid to a party other than its depositor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SettlementOutcome {
    pub contract: ContractId,
    pub status: ContractStatus,
    pub to_offerer: Amount,
    pub to_counterparty: Amount,
    pub penalty: Amount,
}

impl SettlementOutcome {
    pub fn total(&self) -> Amount {
        self.to_offerer + self.to_counterparty
    }
}

/// Creates a proposed contract.
///
/// A zero-amount cancellation contract is allowed: it is what a zero penalty
/// rate produces, and the pair must still form for the protocol to run.
pub fn new_contract(id: ContractId, terms: ContractTerms, now: Minutes) -> Result<Contract, ContractError> {
    let needs_y = matches!(terms.kind, ContractKind::GpCancellation | ContractKind::GpPayment);
    if needs_y && terms.cancellation_hash.is_none() {
        return Err(ContractError::MissingHash(terms.kind));
    }
    if terms.amount.is_zero() && terms.kind != ContractKind::GpCancellation {
        return Err(ContractError::ZeroAmount);
    }
    if terms.locktime <= now {
        return Err(ContractError::ExpiredLocktime {
            now,
            locktime: terms.locktime,
        });
    }
    Ok(Contract {
        id,
        terms,
        status: ContractStatus::Proposed,
    })
}

impl Contract {
    pub fn kind(&self) -> ContractKind {
        self.terms.kind
    }

    /// Funds held by the contract once accepted.
    pub fn locked_total(&self) -> Amount {
        self.terms.amount + self.terms.penalty
    }

    pub fn accept(&mut self) -> Result<(), ContractError> {
        match self.status {
            ContractStatus::Proposed => {
                self.status = ContractStatus::Accepted;
                Ok(())
            }
            ContractStatus::Accepted => Ok(()),
            _ => Err(ContractError::AlreadyTerminal),
        }
    }

    /// Settles the contract and records its terminal status.
    pub fn resolve(&mut self, witness: &Witness, now: Minutes) -> Result<SettlementOutcome, ContractError> {
        let outcome = self.evaluate(witness, now)?;
        self.status = outcome.status;
        Ok(outcome)
    }

    /// Pure evaluation of [`Contract::resolve`] without changing state.
    pub fn evaluate(&self, witness: &Witness, now: Minutes) -> Result<SettlementOutcome, ContractError> {
        match self.status {
            ContractStatus::Accepted => {}
            ContractStatus::Proposed => return Err(ContractError::NotAccepted),
            _ => return Err(ContractError::AlreadyTerminal),
        }
        let t = &self.terms;
        let before_expiry = now < t.locktime;
        match witness {
            Witness::PreimageX(p) | Witness::PreimageR(p) => {
                let hash = match witness {
                    Witness::PreimageX(_) => Some(t.payment_hash),
                    _ => t.cancellation_hash,
                };
                let hash = hash.ok_or(ContractError::MissingHash(t.kind))?;
                if !hash.matches(p) {
                    return Err(ContractError::WrongPreimage);
                }
                if !before_expiry {
                    return Err(ContractError::Expired { now, locktime: t.locktime });
                }
            }
            Witness::TimeoutClaim if before_expiry => {
                return Err(ContractError::TooEarly { now, locktime: t.locktime });
            }
            _ => {}
        }
        let total = self.locked_total();
        let (status, to_offerer, penalty) = match (t.kind, witness) {
            (ContractKind::Htlc | ContractKind::GpPayment, Witness::PreimageX(_)) => {
                (ContractStatus::SettledPayment, Amount::ZERO, Amount::ZERO)
            }
            (ContractKind::GpPayment, Witness::PreimageR(_)) => (ContractStatus::SettledCancellation, total, Amount::ZERO),
            (ContractKind::Htlc | ContractKind::GpPayment, Witness::TimeoutClaim) => {
                (ContractStatus::TimedOutRefund, total, Amount::ZERO)
            }
            (ContractKind::Htlc | ContractKind::GpPayment, Witness::MutualTermination { .. }) => {
                (ContractStatus::SettledCancellation, total, Amount::ZERO)
            }
            (ContractKind::Htlc, Witness::PreimageR(_)) => return Err(ContractError::MissingHash(t.kind)),

            (ContractKind::Htlc1, Witness::PreimageX(_)) => (ContractStatus::SettledPayment, Amount::ZERO, Amount::ZERO),
            (ContractKind::Htlc1, Witness::TimeoutClaim) => (ContractStatus::TimedOutPenalty, total, t.penalty),
            (ContractKind::Htlc1, Witness::MutualTermination { compensation }) => {
                let paid = (*compensation).min(t.penalty);
                (ContractStatus::SettledCancellation, t.amount + paid, paid)
            }
            (ContractKind::Htlc1, Witness::PreimageR(_)) => return Err(ContractError::MissingHash(t.kind)),

            (ContractKind::GpCancellation, Witness::PreimageX(_)) => (ContractStatus::SettledPayment, total, Amount::ZERO),
            (ContractKind::GpCancellation, Witness::PreimageR(_)) => {
                (ContractStatus::SettledCancellation, total, Amount::ZERO)
            }
            (ContractKind::GpCancellation, Witness::TimeoutClaim) => (ContractStatus::TimedOutPenalty, Amount::ZERO, total),
            (ContractKind::GpCancellation, Witness::MutualTermination { compensation }) => {
                if *compensation < total {
                    return Err(ContractError::InsufficientCompensation {
                        offered: *compensation,
                        required: total,
                    });
                }
                (ContractStatus::SettledCancellation, Amount::ZERO, total)
            }
        };
        Ok(SettlementOutcome {
            contract: self.id,
            status,
            to_offerer,
            to_counterparty: total.checked_sub(to_offerer).expect("offerer share within total"),
            penalty,
        })
    }
}

/// HTLC1.0 resolution: one contract holds the payer's amount and the payee's
/// penalty deposit; a preimage gives the payee both, a timeout gives the
/// payer both.
pub fn htlc1_resolve(contract: &mut Contract, witness: &Witness, now: Minutes) -> Result<SettlementOutcome, ContractError> {
    if contract.kind() != ContractKind::Htlc1 {
        return Err(ContractError::UnsupportedKind(contract.kind()));
    }
    contract.resolve(witness, now)
}
