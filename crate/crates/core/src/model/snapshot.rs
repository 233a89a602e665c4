//! Topology dump ingestion.
//!
//! Records follow the public Lightning Network graph dumps: one entry per
//! channel with both endpoints, the capacity in satoshi, a `disabled` flag and
//! an optional routing policy per endpoint. A file may hold a bare JSON array
//! of records or an object with the array under `channels` or `edges`.

use serde::{Deserialize, Serialize};

use super::{Amount, Channel, ChannelId, FeePolicy, ModelError, NetworkGraph, NodeId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub channel_id: String,
    pub node1_pub: String,
    pub node2_pub: String,
    pub capacity_sat: u64,
    #[serde(default)]
    pub disabled: bool,
    #[serde(default)]
    pub node1_policy: Option<PolicyRecord>,
    #[serde(default)]
    pub node2_policy: Option<PolicyRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRecord {
    #[serde(default)]
    pub base_fee_msat: u64,
    #[serde(default)]
    pub fee_rate_ppm: u64,
    #[serde(default)]
    pub time_lock_delta: u32,
}

impl From<&PolicyRecord> for FeePolicy {
    fn from(p: &PolicyRecord) -> Self {
        FeePolicy::new(Amount::from_msat(p.base_fee_msat), p.fee_rate_ppm)
    }
}

#[derive(Deserialize)]
struct WrappedRecords {
    #[serde(default, alias = "edges")]
    channels: Vec<ChannelRecord>,
}

pub fn parse_records(json: &str) -> Result<Vec<ChannelRecord>, ModelError> {
    let position = |e: serde_json::Error| ModelError::Parse(format!("snapshot line {} column {}: {e}", e.line(), e.column()));
    if json.trim_start().starts_with('{') {
        let wrapped: WrappedRecords = serde_json::from_str(json).map_err(position)?;
        Ok(wrapped.channels)
    } else {
        serde_json::from_str(json).map_err(position)
    }
}

/// Builds a graph from records, converting satoshi to msat and splitting each
/// capacity equally between its endpoints. Disabled records are kept and
/// flagged. A node's fee policy is taken from the first record naming it.
pub fn graph_from_records(records: &[ChannelRecord]) -> Result<NetworkGraph, ModelError> {
    let mut graph = NetworkGraph::new();
    for rec in records {
        let a = NodeId::new(&rec.node1_pub);
        let b = NodeId::new(&rec.node2_pub);
        for (node, policy) in [(&a, &rec.node1_policy), (&b, &rec.node2_policy)] {
            if !graph.contains_node(node) {
                graph.add_node(node.clone(), policy.as_ref().map(FeePolicy::from).unwrap_or_default());
            }
        }
        let capacity = Amount::from_msat(
            rec.capacity_sat
                .checked_mul(1_000)
                .ok_or_else(|| ModelError::Parse(format!("capacity overflow in {}", rec.channel_id)))?,
        );
        let mut channel = Channel::with_split_capacity(ChannelId::new(&rec.channel_id), a, b, capacity);
        channel.disabled = rec.disabled;
        graph.add_channel(channel)?;
    }
    Ok(graph)
}
