//! Attacker investment ratio across path lengths and penalty rates.

use rayon::prelude::*;
use serde::Serialize;

use htlcgp_core::model::{Amount, Minutes, NodeId, PenaltyRate};
use htlcgp_core::penalty::{investment_ratio, rational_to_f64, PathPlan, PenaltyError, PlanParams};

/// Shared plan settings for every sweep point. Self-payments carry no fees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RatioSettings {
    pub delta: Minutes,
    pub t_base: Minutes,
    pub k: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioPoint {
    pub hops: usize,
    pub gamma: PenaltyRate,
    pub value: Amount,
    /// `(α_0 + tgp_{n-1}) / α_0`.
    pub multiple: f64,
}

pub fn budget_multiple(hops: usize, gamma: &PenaltyRate, value: Amount, s: &RatioSettings) -> Result<f64, PenaltyError> {
    let plan = PathPlan::build(
        (0..=hops).map(|i| NodeId::new(format!("u{i}"))).collect(),
        &PlanParams {
            alpha: value,
            fees: vec![Amount::ZERO; hops.saturating_sub(1)],
            gamma: gamma.clone(),
            delta: s.delta,
            t_base: s.t_base,
            k: s.k,
            psi: None,
        },
    )?;
    Ok(rational_to_f64(&investment_ratio(&plan).budget_multiple))
}

/// Evaluates every `(hops, gamma, value)` point; output order follows input.
pub fn sweep_investment_ratio(
    points: &[(usize, PenaltyRate, Amount)],
    settings: &RatioSettings,
) -> Result<Vec<RatioPoint>, PenaltyError> {
    points
        .par_iter()
        .map(|(hops, gamma, value)| {
            Ok(RatioPoint {
                hops: *hops,
                gamma: gamma.clone(),
                value: *value,
                multiple: budget_multiple(*hops, gamma, *value, settings)?,
            })
        })
        .collect()
}

/// Least-squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    LinearFit {
        slope,
        intercept,
        r_squared: if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot },
    }
}
