//! Evaluation of griefing-penalty economics: snapshot preprocessing,
//! max-flow and centrality analysis, the two jamming strategies with their
//! return on investment, investment-ratio sweeps, and an exhaustive check of
//! honest-node outcomes under adversarial neighbours.

pub mod adversary;
pub mod attack;
pub mod centrality;
pub mod config;
pub mod flow;
pub mod output;
pub mod preprocess;
pub mod sweep;
pub mod topology;

use thiserror::Error;

pub use attack::{
    attack_strategy_existing_channels, attack_strategy_new_channels, compute_roi, log_modulus, AttackError,
    AttackParams, AttackReport, RoIResult,
};
pub use centrality::{betweenness, betweenness_top};
pub use config::{run_ratio_sweeps, run_roi_sweeps, ExperimentConfig, RoiRow, RoiTables, Topology};
pub use flow::{max_flow, FlowResult};
pub use preprocess::{load_and_preprocess_snapshot, preprocess_records};
pub use sweep::{linear_fit, sweep_investment_ratio, LinearFit, RatioPoint, RatioSettings};
pub use topology::{hub_and_spoke, SyntheticSpec};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    #[error("snapshot parse error: {0}")]
    Parse(String),
    #[error("graph is empty after preprocessing")]
    EmptyGraph,
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Penalty(#[from] htlcgp_core::penalty::PenaltyError),
}
