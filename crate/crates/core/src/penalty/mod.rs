//! Closed-form protocol arithmetic for a single multihop payment: the amount
//! cascade, the timelock schedule, the routing attempt cost, the cumulative
//! griefing penalty per hop, the receiver's blinding factor and the attacker
//! investment ratio.
//!
//! Penalties are evaluated exactly over rationals. Contracts carry the value
//! rounded half-up to whole msat.

mod position;

pub use position::{infer_position, PositionObservation};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Amount, Minutes, NodeId, PenaltyRate};

/// Default masking factor for the routing attempt cost.
pub const DEFAULT_MASKING_FACTOR: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PenaltyError {
    #[error("base timelock {t_base} must exceed the confirmation bound {delta}")]
    InvalidBase { t_base: Minutes, delta: Minutes },
    #[error("confirmation bound must be positive")]
    ZeroDelta,
    #[error("hop index {index} out of range for a {hops}-hop path")]
    IndexOutOfRange { index: usize, hops: usize },
    #[error("a path needs at least two nodes, got {0}")]
    PathTooShort(usize),
    #[error("expected {expected} intermediary fees, got {got}")]
    FeeCount { expected: usize, got: usize },
}

/// `α_0 = α + Σ fee(U_i)`, then each hop forwards the previous amount minus
/// the forwarding node's fee, ending at `α` for the payee.
pub fn compute_amount_cascade(alpha: Amount, fees: &[Amount]) -> Vec<Amount> {
    let total: Amount = alpha + fees.iter().copied().sum();
    let mut amounts = Vec::with_capacity(fees.len() + 1);
    let mut current = total;
    amounts.push(current);
    for fee in fees {
        current = current.checked_sub(*fee).expect("cascade stays above alpha");
        amounts.push(current);
    }
    amounts
}

/// Tightest schedule satisfying `t_{n-1} > Δ` and `t_i ≥ t_{i+1} + Δ`:
/// `t_i = t_base + (n-1-i)·Δ`.
pub fn compute_timelock_schedule(hops: usize, t_base: Minutes, delta: Minutes) -> Result<Vec<Minutes>, PenaltyError> {
    if delta.get() == 0 {
        return Err(PenaltyError::ZeroDelta);
    }
    if t_base <= delta {
        return Err(PenaltyError::InvalidBase { t_base, delta });
    }
    Ok((0..hops)
        .map(|i| Minutes::new(t_base.get() + (hops - 1 - i) as u64 * delta.get()))
        .collect())
}

/// Smallest ψ with `ψ·t_0 ≥ α·((k+1)·t_0 + Δ·k(k+1)/2)`.
pub fn choose_psi(alpha: Amount, t0: Minutes, delta: Minutes, k: u32) -> Amount {
    if alpha.is_zero() {
        return Amount::ZERO;
    }
    let k = k as u128;
    let t0 = t0.get() as u128;
    let rhs = alpha.msat() as u128 * ((k + 1) * t0 + delta.get() as u128 * k * (k + 1) / 2);
    Amount::from_msat(rhs.div_ceil(t0) as u64)
}

/// Inputs for building a [`PathPlan`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanParams {
    /// Amount the payee receives.
    pub alpha: Amount,
    /// Fee of each intermediary `U_1..U_{n-1}`.
    pub fees: Vec<Amount>,
    pub gamma: PenaltyRate,
    pub delta: Minutes,
    /// Timelock of the last hop.
    pub t_base: Minutes,
    /// Masking factor. Zero disables the routing attempt cost.
    pub k: u32,
    /// Overrides the routing attempt cost derived from `k`.
    #[serde(default)]
    pub psi: Option<Amount>,
}

/// Every per-hop quantity of one payment over `U_0..U_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathPlan {
    pub path: Vec<NodeId>,
    pub alpha: Amount,
    pub fees: Vec<Amount>,
    /// `α_0..α_{n-1}`.
    pub amounts: Vec<Amount>,
    /// `t_0..t_{n-1}`.
    pub timelocks: Vec<Minutes>,
    /// `tgp_0..tgp_{n-1}` rounded to msat.
    pub tgp: Vec<Amount>,
    pub gamma: PenaltyRate,
    pub delta: Minutes,
    pub psi: Amount,
    pub k: u32,
    /// Blinding factor shared with the payee.
    pub phi: BigRational,
}

impl PathPlan {
    pub fn build(path: Vec<NodeId>, params: &PlanParams) -> Result<Self, PenaltyError> {
        if path.len() < 2 {
            return Err(PenaltyError::PathTooShort(path.len()));
        }
        let hops = path.len() - 1;
        if params.fees.len() != hops - 1 {
            return Err(PenaltyError::FeeCount {
                expected: hops - 1,
                got: params.fees.len(),
            });
        }
        let amounts = compute_amount_cascade(params.alpha, &params.fees);
        let timelocks = compute_timelock_schedule(hops, params.t_base, params.delta)?;
        let psi = match (params.psi, params.k) {
            (Some(psi), _) => psi,
            (None, 0) => Amount::ZERO,
            (None, k) => choose_psi(params.alpha, timelocks[0], params.delta, k),
        };
        let mut plan = PathPlan {
            path,
            alpha: params.alpha,
            fees: params.fees.clone(),
            amounts,
            timelocks,
            tgp: Vec::new(),
            gamma: params.gamma.clone(),
            delta: params.delta,
            psi,
            k: params.k,
            phi: BigRational::zero(),
        };
        plan.tgp = plan.tgp_exact_all().iter().map(Amount::round_half_up).collect();
        plan.phi = compute_phi(&plan);
        Ok(plan)
    }

    /// Number of hops `n`.
    pub fn hops(&self) -> usize {
        self.amounts.len()
    }

    pub fn sender(&self) -> &NodeId {
        &self.path[0]
    }

    pub fn receiver(&self) -> &NodeId {
        &self.path[self.hops()]
    }

    /// Fee of the node at `position` (zero for the endpoints).
    pub fn fee_at(&self, position: usize) -> Amount {
        if position == 0 || position >= self.hops() {
            Amount::ZERO
        } else {
            self.fees[position - 1]
        }
    }

    /// `(ψ + α_0)·t_0 + Σ_{j=1}^{i} α_j·t_j`: collateral-time covered by `tgp_i`.
    pub fn collateral_time(&self, i: usize) -> Result<BigRational, PenaltyError> {
        if i >= self.hops() {
            return Err(PenaltyError::IndexOutOfRange { index: i, hops: self.hops() });
        }
        // integer-valued, so sum without rational normalisation
        let mut sum = int((self.psi + self.amounts[0]).msat()) * int(self.timelocks[0].get());
        for j in 1..=i {
            sum += int(self.amounts[j].msat()) * int(self.timelocks[j].get());
        }
        Ok(BigRational::from_integer(sum))
    }

    /// Cumulative griefing penalty `tgp_i` before rounding.
    pub fn tgp_exact(&self, i: usize) -> Result<BigRational, PenaltyError> {
        Ok(self.gamma.as_rational() * self.collateral_time(i)?)
    }

    /// `tgp_0..tgp_{n-1}` before rounding, in one pass.
    pub fn tgp_exact_all(&self) -> Vec<BigRational> {
        let mut sum = int(self.psi.msat()) * int(self.timelocks[0].get());
        (0..self.hops())
            .map(|j| {
                sum += int(self.amounts[j].msat()) * int(self.timelocks[j].get());
                self.gamma.as_rational() * BigRational::from_integer(sum.clone())
            })
            .collect()
    }

    pub fn to_record(&self) -> PlanRecord {
        PlanRecord {
            path: self.path.clone(),
            alpha_msat: self.alpha.msat(),
            fees_msat: self.fees.iter().map(|a| a.msat()).collect(),
            amounts_msat: self.amounts.iter().map(|a| a.msat()).collect(),
            timelocks_min: self.timelocks.iter().map(|t| t.get()).collect(),
            tgp_msat: self.tgp.iter().map(|a| a.msat()).collect(),
            gamma_per_min: self.gamma.clone(),
            delta_min: self.delta.get(),
            psi_msat: self.psi.msat(),
            k: self.k,
            phi_num: self.phi.numer().to_string(),
            phi_den: self.phi.denom().to_string(),
        }
    }
}

/// Serialized form of a plan for experiment logs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub path: Vec<NodeId>,
    pub alpha_msat: u64,
    pub fees_msat: Vec<u64>,
    pub amounts_msat: Vec<u64>,
    pub timelocks_min: Vec<u64>,
    pub tgp_msat: Vec<u64>,
    pub gamma_per_min: PenaltyRate,
    pub delta_min: u64,
    pub psi_msat: u64,
    pub k: u32,
    pub phi_num: String,
    pub phi_den: String,
}

/// `tgp_i` rounded half-up to msat.
pub fn compute_tgp(plan: &PathPlan, i: usize) -> Result<Amount, PenaltyError> {
    Ok(Amount::round_half_up(&plan.tgp_exact(i)?))
}

/// `φ = ((ψ+α_0)·t_0 + Σ_{j≥1} α_j·t_j) / (α·t_{n-1})`, so that
/// `γ·φ·α·t_{n-1} = tgp_{n-1}` exactly.
pub fn compute_phi(plan: &PathPlan) -> BigRational {
    let last = plan.hops() - 1;
    let denom = plan.alpha.to_rational() * plan.timelocks[last].to_rational();
    if denom.is_zero() {
        return BigRational::zero();
    }
    plan.collateral_time(last).expect("last hop exists") / denom
}

fn int(value: u64) -> BigInt {
    BigInt::from(value)
}

/// Intermediary check `tgp_i − γ·α_i·t_i = tgp_{i-1}`, allowing 1 msat of
/// rounding slack between the two contract amounts.
pub fn verify_incoming_tgp(
    tgp_incoming: Amount,
    alpha_i: Amount,
    t_i: Minutes,
    gamma: &PenaltyRate,
    tgp_outgoing: Amount,
) -> bool {
    // scaled by γ's denominator to stay in integers
    let (gn, gd) = (gamma.as_rational().numer(), gamma.as_rational().denom());
    let spread = int(tgp_incoming.msat()) - int(tgp_outgoing.msat());
    let diff = spread * gd - gn * int(alpha_i.msat()) * int(t_i.get());
    diff.abs() <= *gd
}

const RECEIVER_TOLERANCE_INV: u64 = 1_000_000;

/// Relative tolerance of the receiver's approximate check.
pub fn receiver_relative_tolerance() -> BigRational {
    BigRational::new(BigInt::one(), int(RECEIVER_TOLERANCE_INV))
}

/// Receiver check `γ·φ·α·t ≈ tgp_{n-1}`: relative error at most 1e-6 plus an
/// absolute slack of 1 msat.
pub fn verify_receiver_tgp(phi: &BigRational, alpha: Amount, t: Minutes, gamma: &PenaltyRate, tgp: Amount) -> bool {
    // expected = num / den with den > 0; compare after multiplying through
    let num = gamma.as_rational().numer() * phi.numer() * int(alpha.msat()) * int(t.get());
    let den = gamma.as_rational().denom() * phi.denom();
    let scale = int(RECEIVER_TOLERANCE_INV);
    let diff = (int(tgp.msat()) * &den - &num).abs() * &scale;
    diff <= num.abs() + scale * den
}

/// Attacker investment for one griefed self-payment under both protocols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvestmentRatio {
    /// `α_0 / (α_0 + tgp_{n-1})`: at most one.
    pub htlc_over_htlcgp: BigRational,
    /// Reciprocal: how many times more budget the attack needs.
    pub budget_multiple: BigRational,
}

pub fn investment_ratio(plan: &PathPlan) -> InvestmentRatio {
    let alpha0 = plan.amounts[0].to_rational();
    let gp = &alpha0 + plan.tgp_exact(plan.hops() - 1).expect("last hop exists");
    InvestmentRatio {
        htlc_over_htlcgp: &alpha0 / &gp,
        budget_multiple: gp / alpha0,
    }
}

/// Lossy conversion for reporting.
pub fn rational_to_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}
