//! Experiment configuration and the drivers that turn it into result tables.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use htlcgp_core::model::{Amount, FeePolicy, Minutes, NetworkGraph, NodeId, PenaltyRate};
use htlcgp_core::protocol::Protocol;

use crate::attack::{attack_strategy_existing_channels, attack_strategy_new_channels, AttackParams, AttackReport};
use crate::centrality::betweenness_top;
use crate::preprocess::load_and_preprocess_snapshot;
use crate::sweep::{sweep_investment_ratio, RatioPoint, RatioSettings};
use crate::topology::{hub_and_spoke, SyntheticSpec, EXISTING_ATTACKER};
use crate::ExperimentError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    Synthetic(SyntheticSpec),
    Snapshot { path: PathBuf },
}

impl Default for Topology {
    fn default() -> Self {
        Topology::Synthetic(SyntheticSpec::default())
    }
}

/// Accepts msat integers or strings with a `msat`/`sat`/`btc` suffix.
fn amount<'de, D: Deserializer<'de>>(d: D) -> Result<Amount, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Msat(u64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Msat(m) => Ok(Amount::from_msat(m)),
        Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
    }
}

fn amounts<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Amount>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "amount")] Amount);
    Ok(Vec::<Wrap>::deserialize(d)?.into_iter().map(|w| w.0).collect())
}

fn powers_of_ten(start: u64, count: u32) -> Vec<u64> {
    (0..count).map(|i| start * 10u64.pow(i)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocols: Vec<Protocol>,
    /// Penalty rates for the RoI-vs-γ table.
    pub gammas: Vec<PenaltyRate>,
    #[serde(deserialize_with = "amounts")]
    pub tx_values: Vec<Amount>,
    #[serde(deserialize_with = "amounts")]
    pub budgets: Vec<Amount>,
    /// Rate held fixed while another axis varies.
    pub gamma: PenaltyRate,
    #[serde(deserialize_with = "amount")]
    pub tx_value: Amount,
    #[serde(deserialize_with = "amount")]
    pub budget: Amount,
    /// Hop counts for the ratio-vs-path-length table.
    pub path_lengths: Vec<usize>,
    /// Payment values for the ratio-vs-path-length table.
    #[serde(deserialize_with = "amounts")]
    pub ratio_values: Vec<Amount>,
    /// Rates for the ratio-vs-γ table.
    pub ratio_gammas: Vec<PenaltyRate>,
    /// Hop counts for the ratio-vs-γ table.
    pub ratio_path_lengths: Vec<usize>,
    pub k: u32,
    pub delta: Minutes,
    pub t_base: Minutes,
    pub topology: Topology,
    /// Existing attacker node for strategy 2.
    pub attacker: NodeId,
    pub attacker_fee: FeePolicy,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let rates = |exps: std::ops::RangeInclusive<i32>| -> Vec<PenaltyRate> {
            exps.map(|e| format!("1e{e}").parse().expect("valid rate")).collect()
        };
        ExperimentConfig {
            protocols: vec![Protocol::Htlc, Protocol::HtlcGp],
            gammas: rates(-8..=-1),
            // 1 sat .. 100 000 sat
            tx_values: powers_of_ten(1_000, 6).into_iter().map(Amount::from_msat).collect(),
            // 3000 sat .. 3 BTC
            budgets: powers_of_ten(3_000_000, 6).into_iter().map(Amount::from_msat).collect(),
            gamma: "0.001".parse().expect("valid rate"),
            tx_value: Amount::from_sat(10_000),
            budget: Amount::from_sat(3_000_000),
            path_lengths: (4..=20).collect(),
            ratio_values: [50_000, 70_000, 90_000, 110_000].map(Amount::from_sat).to_vec(),
            ratio_gammas: rates(-8..=-1),
            ratio_path_lengths: vec![5, 10, 15, 20],
            k: 4,
            delta: Minutes::new(60),
            t_base: Minutes::new(4320),
            topology: Topology::default(),
            attacker: NodeId::new(EXISTING_ATTACKER),
            attacker_fee: FeePolicy::new(Amount::from_msat(1_000), 1),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let lists = [
            ("protocols", self.protocols.len()),
            ("gammas", self.gammas.len()),
            ("tx_values", self.tx_values.len()),
            ("budgets", self.budgets.len()),
            ("path_lengths", self.path_lengths.len()),
            ("ratio_values", self.ratio_values.len()),
            ("ratio_gammas", self.ratio_gammas.len()),
            ("ratio_path_lengths", self.ratio_path_lengths.len()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, len)| *len == 0) {
            return Err(ExperimentError::Config(format!("sweep `{name}` is empty")));
        }
        if self.path_lengths.iter().chain(&self.ratio_path_lengths).any(|&n| n == 0) {
            return Err(ExperimentError::Config("path lengths must be at least one hop".into()));
        }
        if self.delta.get() == 0 || self.t_base <= self.delta {
            return Err(ExperimentError::Config(format!(
                "t_base ({}) must exceed delta ({}) and delta must be positive",
                self.t_base, self.delta
            )));
        }
        if self.tx_value.is_zero() || self.tx_values.iter().any(|v| v.is_zero()) {
            return Err(ExperimentError::Config("transaction values must be positive".into()));
        }
        Ok(())
    }

    pub fn load_graph(&self) -> Result<NetworkGraph, ExperimentError> {
        match &self.topology {
            Topology::Synthetic(spec) => hub_and_spoke(spec, self.seed),
            Topology::Snapshot { path } => load_and_preprocess_snapshot(path),
        }
    }

    pub fn ratio_settings(&self) -> RatioSettings {
        RatioSettings {
            delta: self.delta,
            t_base: self.t_base,
            k: self.k,
        }
    }

    pub fn attack_params(&self, protocol: Protocol, budget: Amount, tx_value: Amount, gamma: &PenaltyRate) -> AttackParams {
        AttackParams {
            budget,
            tx_value,
            protocol,
            gamma: gamma.clone(),
            delta: self.delta,
            t_base: self.t_base,
            k: self.k,
            attacker_fee: self.attacker_fee,
        }
    }
}

/// Which axis a RoI row varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiAxis {
    Value,
    Budget,
    Gamma,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoiRow {
    pub axis: RoiAxis,
    pub protocol: Protocol,
    pub tx_value: Amount,
    pub budget: Amount,
    pub gamma: PenaltyRate,
    pub report: AttackReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RoiTables {
    pub by_value: Vec<RoiRow>,
    pub by_budget: Vec<RoiRow>,
    pub by_gamma: Vec<RoiRow>,
}

/// Runs one attack strategy over all three RoI axes against the most
/// central node of `graph`.
pub fn run_roi_sweeps(graph: &NetworkGraph, config: &ExperimentConfig, strategy: u8) -> Result<RoiTables, ExperimentError> {
    config.validate()?;
    let victim = betweenness_top(graph, 1).pop().ok_or(ExperimentError::EmptyGraph)?;
    let mut points = Vec::new();
    for &protocol in &config.protocols {
        for &v in &config.tx_values {
            points.push((RoiAxis::Value, protocol, v, config.budget, config.gamma.clone()));
        }
        for &b in &config.budgets {
            points.push((RoiAxis::Budget, protocol, config.tx_value, b, config.gamma.clone()));
        }
        for g in &config.gammas {
            points.push((RoiAxis::Gamma, protocol, config.tx_value, config.budget, g.clone()));
        }
    }
    let rows: Vec<RoiRow> = points
        .into_par_iter()
        .map(|(axis, protocol, tx_value, budget, gamma)| {
            let params = config.attack_params(protocol, budget, tx_value, &gamma);
            let report = match strategy {
                1 => attack_strategy_new_channels(graph, &victim, &params),
                2 => attack_strategy_existing_channels(graph, &config.attacker, &victim, &params),
                s => return Err(ExperimentError::Config(format!("unknown strategy {s} (expected 1 or 2)"))),
            }?;
            Ok(RoiRow {
                axis,
                protocol,
                tx_value,
                budget,
                gamma,
                report,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let mut tables = RoiTables::default();
    for row in rows {
        match row.axis {
            RoiAxis::Value => tables.by_value.push(row),
            RoiAxis::Budget => tables.by_budget.push(row),
            RoiAxis::Gamma => tables.by_gamma.push(row),
        }
    }
    Ok(tables)
}

/// Budget multiple against path length (at `gamma`, every ratio value) and
/// against γ (at every ratio path length, first ratio value).
pub fn run_ratio_sweeps(config: &ExperimentConfig) -> Result<(Vec<RatioPoint>, Vec<RatioPoint>), ExperimentError> {
    config.validate()?;
    let settings = config.ratio_settings();
    let mut by_len = Vec::new();
    for &v in &config.ratio_values {
        for &n in &config.path_lengths {
            by_len.push((n, config.gamma.clone(), v));
        }
    }
    let mut by_gamma = Vec::new();
    for &n in &config.ratio_path_lengths {
        for g in &config.ratio_gammas {
            by_gamma.push((n, g.clone(), config.ratio_values[0]));
        }
    }
    Ok((
        sweep_investment_ratio(&by_len, &settings)?,
        sweep_investment_ratio(&by_gamma, &settings)?,
    ))
}
