//! Declarative description of a single payment run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{Fault, NodeBehavior, Protocol, SimConfig};
use crate::model::{Amount, Channel, ChannelId, FeePolicy, Minutes, ModelError, NetworkGraph, NodeId, PenaltyRate};
use crate::penalty::{PathPlan, PenaltyError, PlanParams, DEFAULT_MASKING_FACTOR};

fn default_k() -> u32 {
    DEFAULT_MASKING_FACTOR
}

fn default_latency() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub protocol: Protocol,
    pub path: Vec<NodeId>,
    pub alpha_msat: u64,
    /// Penalty rate per minute.
    pub gamma: PenaltyRate,
    pub delta_min: u64,
    pub t_base_min: u64,
    #[serde(default = "default_k")]
    pub k: u32,
    /// Fee of each intermediary; empty means fee-free forwarding.
    #[serde(default)]
    pub fees_msat: Vec<u64>,
    /// Nodes not listed are honest.
    #[serde(default)]
    pub behaviors: BTreeMap<NodeId, NodeBehavior>,
    #[serde(default)]
    pub faults: Vec<Fault>,
    /// Spendable balance on each side of every hop channel. Defaults to
    /// enough for the payment plus the largest penalty.
    #[serde(default)]
    pub capacity_msat: Option<u64>,
    #[serde(default = "default_latency")]
    pub latency_min: u64,
    #[serde(default)]
    pub receiver_wait_min: Option<u64>,
    #[serde(default)]
    pub onchain_fee_msat: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("behavior given for {0}, which is not on the path")]
    UnknownNode(NodeId),
    #[error("{0} appears twice on the path")]
    DuplicateNode(NodeId),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything [`super::execute_payment`] needs for a scenario.
#[derive(Clone, Debug)]
pub struct PreparedScenario {
    pub graph: NetworkGraph,
    pub plan: PathPlan,
    pub behaviors: Vec<NodeBehavior>,
    pub config: SimConfig,
}

impl Scenario {
    pub fn prepare(&self) -> Result<PreparedScenario, ScenarioError> {
        let mut seen = BTreeSet::new();
        for node in &self.path {
            if !seen.insert(node) {
                return Err(ScenarioError::DuplicateNode(node.clone()));
            }
        }
        if let Some(node) = self.behaviors.keys().find(|n| !seen.contains(n)) {
            return Err(ScenarioError::UnknownNode(node.clone()));
        }
        let hops = self.path.len().saturating_sub(1);
        let fees = if self.fees_msat.is_empty() {
            vec![Amount::ZERO; hops.saturating_sub(1)]
        } else {
            self.fees_msat.iter().copied().map(Amount::from_msat).collect()
        };
        let plan = PathPlan::build(
            self.path.clone(),
            &PlanParams {
                alpha: Amount::from_msat(self.alpha_msat),
                fees,
                gamma: self.gamma.clone(),
                delta: Minutes::new(self.delta_min),
                t_base: Minutes::new(self.t_base_min),
                k: self.k,
                psi: None,
            },
        )?;
        let side = match self.capacity_msat {
            Some(c) => Amount::from_msat(c),
            None => plan.amounts[0] + plan.tgp[hops - 1],
        };
        let mut graph = NetworkGraph::new();
        for node in &self.path {
            graph.add_node(node.clone(), FeePolicy::default());
        }
        for pair in self.path.windows(2) {
            let id = ChannelId::new(format!("{}-{}", pair[0], pair[1]));
            graph.add_channel(Channel::new(id, pair[0].clone(), pair[1].clone(), side, side))?;
        }
        let behaviors = self
            .path
            .iter()
            .map(|n| self.behaviors.get(n).copied().unwrap_or_default())
            .collect();
        let config = SimConfig {
            latency: Minutes::new(self.latency_min),
            receiver_wait: self.receiver_wait_min.map(Minutes::new),
            onchain_fee: Amount::from_msat(self.onchain_fee_msat),
            seed: self.seed,
            faults: self.faults.clone(),
        };
        Ok(PreparedScenario {
            graph,
            plan,
            behaviors,
            config,
        })
    }
}
