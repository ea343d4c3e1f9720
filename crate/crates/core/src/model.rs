//! Agents, bids, allocations and the social-cost metrics every mechanism is
//! measured by. Agents are identified by their 0-based position in a vector.

use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on `Σ shares = 1` accepted by [`Allocation::new`].
pub const SIMPLEX_TOL: f64 = 1e-12;

fn check_positive(values: &[f64], as_bid: bool) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(if as_bid {
                Error::NonPositiveBid { index, value }
            } else {
                Error::NonPositiveCost { index, value }
            });
        }
    }
    Ok(())
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Per-unit production costs, one per agent. At least two agents, all positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.len() < 2 {
            return Err(Error::TooFewAgents(costs.len()));
        }
        check_positive(&costs, false)?;
        Ok(CostVector(costs))
    }

    pub fn costs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        CostVector::new(self.0.iter().map(|c| c * k).collect())
    }

    /// Truthful reports: the bid vector equal to the costs.
    pub fn as_bids(&self) -> BidVector {
        BidVector(self.0.clone())
    }
}

/// Strictly positive bids (or cost reports), one per agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct BidVector(Vec<f64>);

impl BidVector {
    pub fn new(bids: Vec<f64>) -> Result<Self> {
        if bids.is_empty() {
            return Err(Error::TooFewAgents(0));
        }
        check_positive(&bids, true)?;
        Ok(BidVector(bids))
    }

    pub fn bids(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy of the vector with agent `i`'s bid replaced.
    pub fn with_bid(&self, i: usize, bid: f64) -> Result<Self> {
        let mut bids = self.0.clone();
        bids[i] = bid;
        BidVector::new(bids)
    }
}

/// A point of the unit simplex: the split of one unit of work.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Allocation(Vec<f64>);

impl Allocation {
    pub fn new(shares: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(shares, SIMPLEX_TOL)
    }

    pub(crate) fn with_tolerance(shares: Vec<f64>, tol: f64) -> Result<Self> {
        if let Some(bad) = shares.iter().find(|s| !(**s >= 0.0 && **s <= 1.0 + tol)) {
            return Err(Error::InvalidAllocation(format!(
                "share {bad} outside [0, 1]"
            )));
        }
        let total: f64 = shares.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidAllocation(format!(
                "shares sum to {total}, not 1"
            )));
        }
        Ok(Allocation(shares))
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidAllocation(format!(
                "cannot normalize weights with total {total}"
            )));
        }
        Ok(Allocation(weights.iter().map(|w| w / total).collect()))
    }

    pub fn shares(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn uniform(n: usize) -> Self {
        Allocation(vec![1.0 / n as f64; n])
    }
}

/// Result of running a mechanism once: who does what, who is paid what.
///
/// `utilities[i] = payments[i] - costs[i] * shares[i]` against the true costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub allocation: Allocation,
    pub payments: Vec<f64>,
    pub utilities: Vec<f64>,
    pub social_cost: f64,
}

impl Outcome {
    pub fn new(costs: &CostVector, allocation: Allocation, payments: Vec<f64>) -> Result<Self> {
        check_len(costs.len(), allocation.len())?;
        check_len(costs.len(), payments.len())?;
        let utilities = payments
            .iter()
            .zip(costs.costs())
            .zip(allocation.shares())
            .map(|((p, c), x)| p - c * x)
            .collect();
        let social_cost = social_cost(costs, &allocation)?;
        Ok(Outcome {
            allocation,
            payments,
            utilities,
            social_cost,
        })
    }
}

/// `c · x`, the total production cost incurred under allocation `x`.
pub fn social_cost(costs: &CostVector, x: &Allocation) -> Result<f64> {
    check_len(costs.len(), x.len())?;
    Ok(costs
        .costs()
        .iter()
        .zip(x.shares())
        .map(|(c, x)| c * x)
        .sum())
}

/// Cost of giving all the work to the cheapest agent.
pub fn optimal_social_cost(costs: &CostVector) -> f64 {
    costs.min()
}

/// Social cost at the (unique) equilibrium allocation relative to the optimum.
pub fn price_of_anarchy(costs: &CostVector, equilibrium: &Allocation) -> Result<f64> {
    Ok(social_cost(costs, equilibrium)? / optimal_social_cost(costs))
}
