use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Amount, ModelError};

/// Opaque node identifier (a public key in real topology dumps).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(String);

impl ChannelId {
    pub fn new(id: impl Into<String>) -> Self {
        ChannelId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifier of a contract locked in a channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractId(pub u64);

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Forwarding fee charged by a node: `base_fee + fee_rate * value`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeePolicy {
    pub base_fee: Amount,
    /// Proportional fee in parts per million of the forwarded value.
    pub fee_rate_ppm: u64,
}

impl FeePolicy {
    pub fn new(base_fee: Amount, fee_rate_ppm: u64) -> Self {
        FeePolicy { base_fee, fee_rate_ppm }
    }

    /// Fee for forwarding `value`; the proportional part is floored to msat.
    pub fn fee_for(&self, value: Amount) -> Amount {
        let proportional = (value.msat() as u128 * self.fee_rate_ppm as u128) / 1_000_000;
        self.base_fee + Amount::from_msat(proportional as u64)
    }
}

/// One end of a channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// Funds one party has committed to a live contract.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lock {
    pub contract: ContractId,
    pub from: Side,
    pub amount: Amount,
}

/// How a settled contract's locked funds are paid out. `burned` leaves the
/// channel entirely (on-chain mining fees).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Payout {
    pub to_a: Amount,
    pub to_b: Amount,
    pub burned: Amount,
}

impl Payout {
    pub fn to(side: Side, amount: Amount) -> Self {
        let mut p = Payout::default();
        p.credit(side, amount);
        p
    }

    pub fn credit(&mut self, side: Side, amount: Amount) {
        match side {
            Side::A => self.to_a += amount,
            Side::B => self.to_b += amount,
        }
    }

    pub fn total(&self) -> Amount {
        self.to_a + self.to_b + self.burned
    }
}

/// A bidirectional payment channel with per-direction spendable balances.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub node_a: NodeId,
    pub node_b: NodeId,
    /// Spendable by `node_a` towards `node_b`.
    pub remain_ab: Amount,
    /// Spendable by `node_b` towards `node_a`.
    pub remain_ba: Amount,
    pub locked: Vec<Lock>,
    pub disabled: bool,
    /// Set once a dispute has been settled on-chain.
    pub closed: bool,
}

impl Channel {
    pub fn new(id: ChannelId, node_a: NodeId, node_b: NodeId, remain_ab: Amount, remain_ba: Amount) -> Self {
        Channel {
            id,
            node_a,
            node_b,
            remain_ab,
            remain_ba,
            locked: Vec::new(),
            disabled: false,
            closed: false,
        }
    }

    /// Opens a channel whose capacity is split equally between both ends.
    /// An odd msat goes to the lexicographically smaller node id.
    pub fn with_split_capacity(id: ChannelId, node_a: NodeId, node_b: NodeId, capacity: Amount) -> Self {
        let half = capacity.msat() / 2;
        let extra = capacity.msat() % 2;
        let (ab, ba) = if node_a <= node_b {
            (half + extra, half)
        } else {
            (half, half + extra)
        };
        Channel::new(id, node_a, node_b, Amount::from_msat(ab), Amount::from_msat(ba))
    }

    pub fn capacity(&self) -> Amount {
        self.remain_ab + self.remain_ba + self.locked_total()
    }

    pub fn locked_total(&self) -> Amount {
        self.locked.iter().map(|l| l.amount).sum()
    }

    pub fn side_of(&self, node: &NodeId) -> Option<Side> {
        if *node == self.node_a {
            Some(Side::A)
        } else if *node == self.node_b {
            Some(Side::B)
        } else {
            None
        }
    }

    pub fn node(&self, side: Side) -> &NodeId {
        match side {
            Side::A => &self.node_a,
            Side::B => &self.node_b,
        }
    }

    pub fn peer_of(&self, node: &NodeId) -> Option<&NodeId> {
        self.side_of(node).map(|s| self.node(s.other()))
    }

    /// Residual spendable by `side` towards the other end.
    pub fn remain(&self, side: Side) -> Amount {
        match side {
            Side::A => self.remain_ab,
            Side::B => self.remain_ba,
        }
    }

    fn remain_mut(&mut self, side: Side) -> &mut Amount {
        match side {
            Side::A => &mut self.remain_ab,
            Side::B => &mut self.remain_ba,
        }
    }

    /// Moves `amount` from `from`'s residual into a lock held for `contract`.
    pub fn apply_lock(&mut self, contract: ContractId, from: Side, amount: Amount) -> Result<(), ModelError> {
        if self.closed {
            return Err(ModelError::ChannelClosed(self.id.clone()));
        }
        let available = self.remain(from);
        if available < amount {
            return Err(ModelError::InsufficientBalance {
                channel: self.id.clone(),
                available,
                requested: amount,
            });
        }
        *self.remain_mut(from) = available.checked_sub(amount)?;
        self.locked.push(Lock { contract, from, amount });
        Ok(())
    }

    /// Releases every lock belonging to `contract` according to `payout`.
    /// The payout must account for exactly the locked total.
    pub fn settle_lock(&mut self, contract: ContractId, payout: &Payout) -> Result<(), ModelError> {
        let held: Amount = self
            .locked
            .iter()
            .filter(|l| l.contract == contract)
            .map(|l| l.amount)
            .sum();
        if !self.locked.iter().any(|l| l.contract == contract) {
            return Err(ModelError::UnknownContract(contract));
        }
        if payout.total() != held {
            return Err(ModelError::IllegalOutcome {
                contract,
                locked: held,
                paid: payout.total(),
            });
        }
        self.locked.retain(|l| l.contract != contract);
        self.remain_ab += payout.to_a;
        self.remain_ba += payout.to_b;
        Ok(())
    }

    pub fn is_locked(&self, contract: ContractId) -> bool {
        self.locked.iter().any(|l| l.contract == contract)
    }
}

/// A bidirected payment channel network.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkGraph {
    nodes: BTreeMap<NodeId, FeePolicy>,
    channels: BTreeMap<ChannelId, Channel>,
    /// Funds that left the network as on-chain fees.
    burned: Amount,
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: NodeId, policy: FeePolicy) {
        self.nodes.insert(node, policy);
    }

    /// Inserts the channel, registering unknown endpoints with a zero fee policy.
    pub fn add_channel(&mut self, channel: Channel) -> Result<(), ModelError> {
        if self.channels.contains_key(&channel.id) {
            return Err(ModelError::DuplicateChannel(channel.id));
        }
        if channel.node_a == channel.node_b {
            return Err(ModelError::SelfLoop(channel.id));
        }
        self.nodes.entry(channel.node_a.clone()).or_default();
        self.nodes.entry(channel.node_b.clone()).or_default();
        self.channels.insert(channel.id.clone(), channel);
        Ok(())
    }

    pub fn remove_channel(&mut self, id: &ChannelId) -> Option<Channel> {
        self.channels.remove(id)
    }

    /// Removes a node together with every channel touching it.
    pub fn remove_node(&mut self, node: &NodeId) {
        self.nodes.remove(node);
        self.channels.retain(|_, c| c.node_a != *node && c.node_b != *node);
    }

    pub fn contains_node(&self, node: &NodeId) -> bool {
        self.nodes.contains_key(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn fee_policy(&self, node: &NodeId) -> Option<&FeePolicy> {
        self.nodes.get(node)
    }

    pub fn set_fee_policy(&mut self, node: &NodeId, policy: FeePolicy) {
        if let Some(p) = self.nodes.get_mut(node) {
            *p = policy;
        }
    }

    pub fn channels(&self) -> impl Iterator<Item = &Channel> {
        self.channels.values()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, id: &ChannelId) -> Option<&Channel> {
        self.channels.get(id)
    }

    pub fn channel_mut(&mut self, id: &ChannelId) -> Option<&mut Channel> {
        self.channels.get_mut(id)
    }

    /// First open channel joining `u` and `v`, in channel-id order.
    pub fn channel_between(&self, u: &NodeId, v: &NodeId) -> Option<&Channel> {
        self.channels
            .values()
            .find(|c| (c.node_a == *u && c.node_b == *v) || (c.node_a == *v && c.node_b == *u))
    }

    /// Sorted, de-duplicated neighbours of `node`.
    pub fn neighbors(&self, node: &NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .channels
            .values()
            .filter_map(|c| c.peer_of(node).cloned())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Sum of a node's spendable balances across all its channels.
    pub fn balance_of(&self, node: &NodeId) -> Amount {
        self.channels
            .values()
            .filter_map(|c| c.side_of(node).map(|s| c.remain(s)))
            .sum()
    }

    pub fn burned(&self) -> Amount {
        self.burned
    }

    pub fn settle_lock(&mut self, channel: &ChannelId, contract: ContractId, payout: &Payout) -> Result<(), ModelError> {
        let ch = self
            .channels
            .get_mut(channel)
            .ok_or_else(|| ModelError::UnknownChannel(channel.clone()))?;
        ch.settle_lock(contract, payout)?;
        self.burned += payout.burned;
        Ok(())
    }

    pub fn apply_lock(&mut self, channel: &ChannelId, contract: ContractId, from: Side, amount: Amount) -> Result<(), ModelError> {
        self.channels
            .get_mut(channel)
            .ok_or_else(|| ModelError::UnknownChannel(channel.clone()))?
            .apply_lock(contract, from, amount)
    }
}

/// Every residual plus every locked amount in the graph.
pub fn total_funds(graph: &NetworkGraph) -> Amount {
    graph.channels().map(Channel::capacity).sum()
}
