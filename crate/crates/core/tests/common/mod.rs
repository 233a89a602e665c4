#![allow(dead_code)]

use htlcgp_core::model::{Amount, Channel, ChannelId, FeePolicy, Minutes, NetworkGraph, NodeId, PenaltyRate};
use htlcgp_core::penalty::{PathPlan, PlanParams};
use htlcgp_core::protocol::{HopReport, PaymentReport};

pub fn path(n: usize) -> Vec<NodeId> {
    (0..=n).map(|i| NodeId::new(format!("u{i}"))).collect()
}

pub struct PlanSpec {
    pub alpha: u64,
    pub fee: u64,
    pub gamma: &'static str,
    pub delta: u64,
    pub t_base: u64,
    pub k: u32,
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec {
            alpha: 100_000,
            fee: 1_000,
            gamma: "0.001",
            delta: 144,
            t_base: 1440,
            k: 4,
        }
    }
}

pub fn plan(n: usize, spec: &PlanSpec) -> PathPlan {
    PathPlan::build(
        path(n),
        &PlanParams {
            alpha: Amount::from_msat(spec.alpha),
            fees: vec![Amount::from_msat(spec.fee); n - 1],
            gamma: spec.gamma.parse::<PenaltyRate>().unwrap(),
            delta: Minutes::new(spec.delta),
            t_base: Minutes::new(spec.t_base),
            k: spec.k,
            psi: None,
        },
    )
    .unwrap()
}

/// Line graph over the plan's path with `side` msat on each end of every
/// channel.
pub fn line_graph(plan: &PathPlan, side: u64) -> NetworkGraph {
    let mut g = NetworkGraph::new();
    for node in &plan.path {
        g.add_node(node.clone(), FeePolicy::default());
    }
    for (i, pair) in plan.path.windows(2).enumerate() {
        g.add_channel(Channel::new(
            ChannelId::new(format!("c{i}")),
            pair[0].clone(),
            pair[1].clone(),
            Amount::from_msat(side),
            Amount::from_msat(side),
        ))
        .unwrap();
    }
    g
}

/// Enough on both sides for every lock the plan can ask for.
pub fn roomy_graph(plan: &PathPlan) -> NetworkGraph {
    let side = plan.amounts[0].msat() + plan.tgp.iter().map(|t| t.msat()).max().unwrap() + 1_000_000;
    line_graph(plan, side)
}

pub fn penalty_paid(hop: &HopReport) -> bool {
    hop.cancellation.as_ref().is_some_and(|c| !c.penalty_paid.is_zero())
}

/// Compensation an honest node at `pos` is entitled to under HTLC-GP: when
/// its incoming cancellation contract paid out, it keeps that penalty minus
/// what it forwards upstream. `None` when no expired contract paid it.
pub fn prescribed_compensation(report: &PaymentReport, pos: usize) -> Option<i64> {
    let own = &report.hops.get(pos)?;
    if !penalty_paid(own) {
        return None;
    }
    let received = own.cancellation.as_ref().unwrap().amount.msat() as i64;
    let owed = if pos == 0 {
        0
    } else {
        report.hops[pos - 1]
            .cancellation
            .as_ref()
            .map_or(0, |c| c.amount.msat() as i64)
    };
    Some(received - owed)
}
