use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::contract::{ContractKind, ContractStatus};
use crate::model::{Amount, ChannelId, Minutes, NodeId};

/// Which payment construction to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "htlc")]
    Htlc,
    #[serde(rename = "htlc1", alias = "htlc1.0")]
    Htlc1,
    #[serde(rename = "htlc-gp", alias = "htlc_gp", alias = "htlcgp")]
    HtlcGp,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Htlc, Protocol::Htlc1, Protocol::HtlcGp];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Htlc => "htlc",
            Protocol::Htlc1 => "htlc1",
            Protocol::HtlcGp => "htlc-gp",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "htlc" => Ok(Protocol::Htlc),
            "htlc1" | "htlc1.0" => Ok(Protocol::Htlc1),
            "htlc-gp" | "htlc_gp" | "htlcgp" => Ok(Protocol::HtlcGp),
            other => Err(format!("unknown protocol {other:?} (expected htlc, htlc1 or htlc-gp)")),
        }
    }
}

/// Strategy a node follows for the whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeBehavior {
    #[default]
    Honest,
    /// Never releases a preimage or compensation upstream; lets the incoming
    /// contract expire.
    WithholdPreimage,
    /// Does not form its outgoing payment contract.
    RefuseForward,
    /// Declines every incoming contract.
    RefuseSign,
    /// Refuses off-chain termination, forcing on-chain settlement or a
    /// timeout; otherwise honest.
    ReverseGrief,
}

impl NodeBehavior {
    pub const ADVERSARIAL: [NodeBehavior; 4] = [
        NodeBehavior::WithholdPreimage,
        NodeBehavior::RefuseForward,
        NodeBehavior::RefuseSign,
        NodeBehavior::ReverseGrief,
    ];
}

/// Deviation injected into the terms a payer offers on one hop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Fault {
    /// The payer of `hop` locks `msat` less than agreed.
    AmountShortfall { hop: usize, msat: u64 },
    /// The requester of the cancellation contract on `hop` asks for `msat`
    /// more penalty than the plan prescribes.
    PenaltyInflation { hop: usize, msat: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Cancellation contracts, payee to sender.
    Round1,
    /// Payment contracts, sender to payee.
    Round2,
    /// Single forward locking pass of the baselines.
    Locking,
    Release,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Round1 => "round1",
            Phase::Round2 => "round2",
            Phase::Locking => "locking",
            Phase::Release => "release",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PaymentOutcome {
    Success,
    Cancelled,
    /// `position` is the most downstream node that let a contract expire.
    Griefed { position: usize },
    /// Locking stopped at `hop`.
    Aborted { phase: Phase, hop: usize },
}

/// Simulation knobs that are not part of the payment plan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Delay of one message between neighbours.
    pub latency: Minutes,
    /// Payee's wait δ for the payment contract; `None` means `t_{n-1}/2`.
    pub receiver_wait: Option<Minutes>,
    /// Mining fee charged to whoever settles on-chain.
    pub onchain_fee: Amount,
    pub seed: u64,
    pub faults: Vec<Fault>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            latency: Minutes::new(1),
            receiver_wait: None,
            onchain_fee: Amount::ZERO,
            seed: 0,
            faults: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn shortfall(&self, hop: usize) -> Amount {
        self.faults
            .iter()
            .filter_map(|f| match f {
                Fault::AmountShortfall { hop: h, msat } if *h == hop => Some(Amount::from_msat(*msat)),
                _ => None,
            })
            .sum()
    }

    pub fn inflation(&self, hop: usize) -> Amount {
        self.faults
            .iter()
            .filter_map(|f| match f {
                Fault::PenaltyInflation { hop: h, msat } if *h == hop => Some(Amount::from_msat(*msat)),
                _ => None,
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Request,
    Propose,
    Accept,
    Refuse,
    Abort(&'static str),
    /// Payee's choice between completing and cancelling.
    Decide(Secret),
    Release(Secret),
    Withhold,
    OfferCompensation,
    RefuseTermination,
    SettleOffChain,
    SettleOnChain,
    ClaimTimeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Secret {
    X,
    R,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secret = |s: &Secret| match s {
            Secret::X => "x",
            Secret::R => "r",
        };
        match self {
            Action::Request => f.write_str("request"),
            Action::Propose => f.write_str("propose"),
            Action::Accept => f.write_str("accept"),
            Action::Refuse => f.write_str("refuse"),
            Action::Abort(reason) => write!(f, "abort:{reason}"),
            Action::Decide(s) => write!(f, "decide:{}", secret(s)),
            Action::Release(s) => write!(f, "release:{}", secret(s)),
            Action::Withhold => f.write_str("withhold"),
            Action::OfferCompensation => f.write_str("offer_compensation"),
            Action::RefuseTermination => f.write_str("refuse_termination"),
            Action::SettleOffChain => f.write_str("settle_off_chain"),
            Action::SettleOnChain => f.write_str("settle_on_chain"),
            Action::ClaimTimeout => f.write_str("claim_timeout"),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One step of a run, as exported to the JSON-lines trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub time_min: u64,
    pub phase: Phase,
    pub actor: NodeId,
    pub action: Action,
    pub channel: Option<ChannelId>,
    pub contract_kind: Option<ContractKind>,
    pub amount_msat: Option<u64>,
}

/// A contract state change, as exported to the contract log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContractEvent {
    pub time_min: u64,
    pub channel: ChannelId,
    pub kind: ContractKind,
    pub transition: ContractStatus,
    pub credited_party: Option<NodeId>,
    pub amount_msat: u64,
}

/// Final state of one contract in a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContractSummary {
    pub kind: ContractKind,
    pub amount: Amount,
    /// Counterparty deposit (HTLC1.0 only).
    pub deposit: Amount,
    pub status: ContractStatus,
    /// Part of the locked funds paid to a party other than its depositor.
    pub penalty_paid: Amount,
    pub formed_at: Minutes,
    pub settled_at: Option<Minutes>,
    pub on_chain: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HopReport {
    pub channel: ChannelId,
    pub cancellation: Option<ContractSummary>,
    pub payment: Option<ContractSummary>,
}

/// Net effect of a run on every path node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SettlementLedger {
    /// Change in spendable balance, msat.
    pub deltas: BTreeMap<NodeId, i64>,
    /// Penalty received from a counterparty's deposit.
    pub compensation: BTreeMap<NodeId, Amount>,
    /// Time from the first lock to the last settlement on each channel.
    pub lockup: BTreeMap<ChannelId, Minutes>,
    pub elapsed: Minutes,
    /// On-chain fees paid out of the channels.
    pub burned: Amount,
}

impl SettlementLedger {
    pub fn delta(&self, node: &NodeId) -> i64 {
        self.deltas.get(node).copied().unwrap_or(0)
    }

    pub fn compensation_of(&self, node: &NodeId) -> Amount {
        self.compensation.get(node).copied().unwrap_or_default()
    }

    /// Σ deltas + burned; zero whenever funds only moved between nodes.
    pub fn imbalance(&self) -> i64 {
        self.deltas.values().sum::<i64>() + self.burned.msat() as i64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PaymentReport {
    pub protocol: Protocol,
    pub outcome: PaymentOutcome,
    pub ledger: SettlementLedger,
    pub hops: Vec<HopReport>,
    pub trace: Vec<TraceEvent>,
    pub contract_events: Vec<ContractEvent>,
}
