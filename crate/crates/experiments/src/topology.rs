//! Synthetic hub-and-spoke network so experiments run without a snapshot.
//!
//! Layout: `hub` joins `src-NN` leaves (pendant payers) and `sink-NN` nodes,
//! which form a ring among themselves. With `existing_attacker` an
//! `attacker` node is attached to `src-00` and reaches `sink-00` through
//! `relay-0` and `relay-1`, giving a six-hop cycle through the hub.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use htlcgp_core::model::{Amount, Channel, ChannelId, FeePolicy, NetworkGraph, NodeId};

use crate::ExperimentError;

pub const HUB: &str = "hub";
pub const EXISTING_ATTACKER: &str = "attacker";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub sources: usize,
    pub sinks: usize,
    /// Capacity of a hub channel before jitter.
    pub spoke_capacity_sat: u64,
    /// Each capacity is scaled by a factor drawn from `1 ± jitter_percent/100`.
    pub jitter_percent: u64,
    /// Capacity of every channel on the attacker's existing cycle.
    pub attacker_capacity_sat: u64,
    pub existing_attacker: bool,
    pub fee_policy: FeePolicy,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            sources: 6,
            sinks: 6,
            spoke_capacity_sat: 1_000_000_000,
            jitter_percent: 50,
            attacker_capacity_sat: 20_000_000,
            existing_attacker: true,
            fee_policy: FeePolicy::new(Amount::from_msat(1_000), 1),
        }
    }
}

pub fn source_name(i: usize) -> NodeId {
    NodeId::new(format!("src-{i:02}"))
}

pub fn sink_name(i: usize) -> NodeId {
    NodeId::new(format!("sink-{i:02}"))
}

pub fn hub_and_spoke(spec: &SyntheticSpec, seed: u64) -> Result<NetworkGraph, ExperimentError> {
    if spec.sources == 0 || spec.sinks < 2 {
        return Err(ExperimentError::Config(
            "synthetic topology needs at least one source and two sinks".into(),
        ));
    }
    if spec.jitter_percent >= 100 {
        return Err(ExperimentError::Config("jitter_percent must be below 100".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut g = NetworkGraph::new();
    let add = |g: &mut NetworkGraph, a: &NodeId, b: &NodeId, sat: u64| -> Result<(), ExperimentError> {
        for n in [a, b] {
            if !g.contains_node(n) {
                g.add_node(n.clone(), spec.fee_policy);
            }
        }
        let id = ChannelId::new(format!("{a}-{b}"));
        g.add_channel(Channel::with_split_capacity(id, a.clone(), b.clone(), Amount::from_sat(sat)))
            .map_err(|e| ExperimentError::Config(e.to_string()))
    };
    let jittered = |rng: &mut ChaCha20Rng| {
        let j = spec.jitter_percent as i64;
        let pct = 100 + rng.gen_range(-j..=j);
        (spec.spoke_capacity_sat as u128 * pct as u128 / 100) as u64
    };
    let hub = NodeId::new(HUB);
    for i in 0..spec.sources {
        let cap = jittered(&mut rng);
        add(&mut g, &source_name(i), &hub, cap)?;
    }
    for i in 0..spec.sinks {
        let cap = jittered(&mut rng);
        add(&mut g, &hub, &sink_name(i), cap)?;
    }
    let ring = if spec.sinks == 2 { 1 } else { spec.sinks };
    for i in 0..ring {
        let cap = jittered(&mut rng);
        add(&mut g, &sink_name(i), &sink_name((i + 1) % spec.sinks), cap)?;
    }
    if spec.existing_attacker {
        let attacker = NodeId::new(EXISTING_ATTACKER);
        let (r0, r1) = (NodeId::new("relay-0"), NodeId::new("relay-1"));
        let cap = spec.attacker_capacity_sat;
        add(&mut g, &attacker, &source_name(0), cap)?;
        add(&mut g, &sink_name(0), &r0, cap)?;
        add(&mut g, &r0, &r1, cap)?;
        add(&mut g, &r1, &attacker, cap)?;
    }
    Ok(g)
}
