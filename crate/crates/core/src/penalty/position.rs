use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::model::{Amount, Minutes, PenaltyRate};

/// What an intermediary `U_i` can see about its place in the route: the
/// cumulative penalty it must lock towards its predecessor together with the
/// amount and timelock of its incoming hop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositionObservation {
    /// `tgp_{i-1}`.
    pub tgp_incoming: Amount,
    /// `α_{i-1}`.
    pub incoming_amount: Amount,
    /// `t_{i-1}`.
    pub incoming_timelock: Minutes,
    pub gamma: PenaltyRate,
    pub delta: Minutes,
}

const MAX_POSITION: u32 = 100_000;

/// Best position estimate from inverting the penalty formula, assuming no
/// routing attempt cost and the same amount on every upstream hop.
///
/// Returns the largest `m ≥ 1` with `γ·a·(m·t + Δ·m(m−1)/2) ≤ tgp + ½`, i.e.
/// the number of equally sized, Δ-staggered upstream hops that would explain
/// the observed penalty.
pub fn infer_position(obs: &PositionObservation) -> u32 {
    let rate = obs.gamma.as_rational() * obs.incoming_amount.to_rational();
    if rate.is_zero() {
        return 1;
    }
    let bound = obs.tgp_incoming.to_rational() + BigRational::new(BigInt::one(), BigInt::from(2));
    let t = obs.incoming_timelock.to_rational();
    let delta = obs.delta.to_rational();
    let mut sum = BigRational::zero();
    let mut m = 0u32;
    while m < MAX_POSITION {
        // Next hop upstream carries timelock t + m·Δ.
        let next = &sum + &t + &delta * BigRational::from_integer(BigInt::from(m));
        if &rate * &next > bound {
            break;
        }
        sum = next;
        m += 1;
    }
    m.max(1)
}
