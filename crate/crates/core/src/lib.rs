//! Payment model, penalty arithmetic, contracts and the multihop protocol
//! simulator for HTLC with griefing-penalty.

pub mod model;
pub mod penalty;
pub mod contract;
pub mod protocol;
