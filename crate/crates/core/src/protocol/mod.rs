//! Multihop payment execution over a simulated clock: the two-round HTLC-GP
//! protocol and the HTLC and HTLC1.0 baselines, under per-node strategies.

mod engine;
pub mod onion;
mod scenario;
mod types;

pub use engine::{execute_payment, execute_payment_observed, execute_prepared, Prepared, ProtocolError};
pub use scenario::{PreparedScenario, Scenario, ScenarioError};
pub use types::*;
