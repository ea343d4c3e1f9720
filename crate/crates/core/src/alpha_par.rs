//! The α-proportional allocation rule, `x_i ∝ b_i^-α`.
//!
//! For reported costs `c` the rule is the unique minimizer of the scaled
//! social cost `Σ c_i x_i^(1 + 1/α)` over the unit simplex; small α spreads
//! work uniformly, large α concentrates it on the cheapest bidder.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, BidVector, CostVector};
use crate::numerics::minimize_on_simplex_grid;

/// Curvature parameter of the allocation rule. Always positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct AlphaParam(f64);

impl AlphaParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(AlphaParam(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Allocation weights computed in log space with the largest log-weight
/// shifted to zero, so extreme bid ratios or large α cannot overflow.
pub(crate) fn allocate_slice(bids: &[f64], alpha: f64) -> Vec<f64> {
    let logs: Vec<f64> = bids.iter().map(|b| -alpha * b.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

pub fn allocate(bids: &BidVector, alpha: AlphaParam) -> Allocation {
    Allocation::from_weights(&allocate_slice(bids.bids(), alpha.value()))
        .expect("positive bids give positive weights")
}

pub(crate) fn scaled_objective_slice(costs: &[f64], shares: &[f64], alpha: f64) -> f64 {
    let exponent = 1.0 + 1.0 / alpha;
    costs
        .iter()
        .zip(shares)
        .map(|(c, x)| c * x.powf(exponent))
        .sum()
}

/// `Σ c_i x_i^(1 + 1/α)`.
pub fn scaled_objective(costs: &CostVector, x: &Allocation, alpha: AlphaParam) -> Result<f64> {
    if costs.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: costs.len(),
            got: x.len(),
        });
    }
    Ok(scaled_objective_slice(
        costs.costs(),
        x.shares(),
        alpha.value(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub closed_form: Allocation,
    pub grid_min: Allocation,
    pub max_coord_gap: f64,
}

/// Compares the closed-form rule against brute-force minimization of the
/// scaled objective on a simplex grid of the given resolution.
pub fn verify_optimality(
    costs: &CostVector,
    alpha: AlphaParam,
    resolution: f64,
) -> Result<OptimalityReport> {
    let closed_form = allocate(&costs.as_bids(), alpha);
    let grid_min = minimize_on_simplex_grid(
        |x| scaled_objective_slice(costs.costs(), x, alpha.value()),
        costs.len(),
        resolution,
    )?;
    let max_coord_gap = closed_form
        .shares()
        .iter()
        .zip(grid_min.shares())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(OptimalityReport {
        closed_form,
        grid_min,
        max_coord_gap,
    })
}
