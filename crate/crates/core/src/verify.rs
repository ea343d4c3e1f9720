//! Brute-force equilibrium and incentive checks, independent of the
//! closed-form solvers they are used to certify.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::alpha_par::AlphaParam;
use crate::dsic;
use crate::error::{Error, Result};
use crate::model::{BidVector, CostVector};
use crate::numerics::log_space;
use crate::paid_as_bid;
use crate::tullock::{contest_utility, Budget};

/// A mechanism's utility `u_i(b_i, b_-i)` for an agent with a given cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum UtilityFunctional {
    Dsic { alpha: AlphaParam },
    Tullock { budget: Budget },
    PaidAsBid { alpha: f64 },
}

impl UtilityFunctional {
    pub fn dsic(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::DivergentPayment { alpha });
        }
        Ok(UtilityFunctional::Dsic {
            alpha: AlphaParam::new(alpha)?,
        })
    }

    pub fn tullock(budget: f64) -> Result<Self> {
        Ok(UtilityFunctional::Tullock {
            budget: Budget::new(budget)?,
        })
    }

    pub fn paid_as_bid(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must exceed 1, got {alpha}"
            )));
        }
        Ok(UtilityFunctional::PaidAsBid { alpha })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            UtilityFunctional::Dsic { .. } => "dsic",
            UtilityFunctional::Tullock { .. } => "tullock",
            UtilityFunctional::PaidAsBid { .. } => "paid_as_bid",
        }
    }

    /// Utility of bidding `own` against `opposing`. A zero bid means sitting
    /// out and is worth exactly 0.
    pub fn utility(&self, own: f64, opposing: &[f64], cost: f64) -> Result<f64> {
        if own == 0.0 {
            return Ok(0.0);
        }
        match *self {
            UtilityFunctional::Dsic { alpha } => {
                let mut all = Vec::with_capacity(opposing.len() + 1);
                all.push(own);
                all.extend_from_slice(opposing);
                dsic::deviation_utility(0, &BidVector::new(all)?, own, cost, alpha)
            }
            UtilityFunctional::Tullock { budget } => {
                Ok(contest_utility(cost, own, opposing.iter().sum(), budget))
            }
            UtilityFunctional::PaidAsBid { alpha } => {
                Ok(paid_as_bid::utility(cost, own, opposing, alpha))
            }
        }
    }
}

const GOLDEN_WIDTH: f64 = 1e-10;

/// Best response over a log grid on `[search_lo, search_hi]` plus the zero
/// bid, refined by golden-section search around the grid argmax.
pub fn best_response(
    u: &UtilityFunctional,
    opposing: &[f64],
    cost: f64,
    search_lo: f64,
    search_hi: f64,
    grid_size: usize,
) -> Result<(f64, f64)> {
    if !(search_lo > 0.0 && search_lo < search_hi) || grid_size < 100 {
        return Err(Error::InvalidParameter(format!(
            "best response needs 0 < lo < hi and grid >= 100 (got [{search_lo}, {search_hi}], {grid_size})"
        )));
    }
    let grid = log_space(search_lo, search_hi, grid_size);
    let values = grid
        .iter()
        .map(|b| u.utility(*b, opposing, cost))
        .collect::<Result<Vec<_>>>()?;
    let k = (0..grid.len()).fold(0, |best, i| if values[i] > values[best] { i } else { best });

    let mut a = grid[k.saturating_sub(1)];
    let mut b = grid[(k + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = u.utility(x1, opposing, cost)?;
    let mut f2 = u.utility(x2, opposing, cost)?;
    while b - a > GOLDEN_WIDTH {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = u.utility(x2, opposing, cost)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = u.utility(x1, opposing, cost)?;
        }
        if x1 >= x2 {
            break;
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [
        (0.0, 0.0),
        (grid[k], values[k]),
        (mid, u.utility(mid, opposing, cost)?),
    ];
    Ok(candidates
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |best, c| {
            if c.1 > best.1 {
                c
            } else {
                best
            }
        }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponseReport {
    pub agent: usize,
    pub best_bid: f64,
    pub best_utility: f64,
    pub tested_bid: f64,
    pub tested_utility: f64,
    pub relative_gap: f64,
    pub grid_size: usize,
}

const GRID_SIZE: usize = 200;
const MAX_WIDENINGS: usize = 6;

/// Best response with the default window `[min(c, b)/10, 100 max(c, b)]`,
/// widened tenfold on whichever side the argmax lands on. The tested bid
/// itself is one of the candidates, so the gap is never negative.
pub fn best_response_report(
    u: &UtilityFunctional,
    agent: usize,
    tested_bid: f64,
    opposing: &[f64],
    cost: f64,
) -> Result<BestResponseReport> {
    let low_anchor = if tested_bid > 0.0 {
        cost.min(tested_bid)
    } else {
        cost
    };
    let mut lo = low_anchor / 10.0;
    let mut hi = cost.max(tested_bid) * 100.0;
    let mut found = best_response(u, opposing, cost, lo, hi, GRID_SIZE)?;
    for _ in 0..MAX_WIDENINGS {
        let step = (hi / lo).powf(1.0 / (GRID_SIZE - 1) as f64);
        if found.0 > 0.0 && found.0 <= lo * step {
            lo /= 10.0;
        } else if found.0 >= hi / step {
            hi *= 10.0;
        } else {
            break;
        }
        found = best_response(u, opposing, cost, lo, hi, GRID_SIZE)?;
    }
    let tested_utility = u.utility(tested_bid, opposing, cost)?;
    let (best_bid, best_utility) = if tested_utility >= found.1 {
        (tested_bid, tested_utility)
    } else {
        found
    };
    Ok(BestResponseReport {
        agent,
        best_bid,
        best_utility,
        tested_bid,
        tested_utility,
        relative_gap: (best_utility - tested_utility) / best_utility.abs().max(1e-12),
        grid_size: GRID_SIZE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PneReport {
    pub mechanism: &'static str,
    pub tolerance: f64,
    pub agents: Vec<BestResponseReport>,
    pub pass: bool,
}

impl PneReport {
    pub fn max_gap(&self) -> f64 {
        self.agents
            .iter()
            .map(|r| r.relative_gap)
            .fold(0.0, f64::max)
    }
}

/// Certifies `candidate_bids` as a pure Nash equilibrium: every agent's
/// best deviation gains at most `tolerance` relative utility. Zero bids
/// (agents sitting out) are allowed.
pub fn check_pne(
    u: &UtilityFunctional,
    candidate_bids: &[f64],
    costs: &CostVector,
    tolerance: f64,
) -> Result<PneReport> {
    if candidate_bids.len() != costs.len() {
        return Err(Error::LengthMismatch {
            expected: costs.len(),
            got: candidate_bids.len(),
        });
    }
    if let Some((index, &value)) = candidate_bids
        .iter()
        .enumerate()
        .find(|(_, b)| !(**b >= 0.0 && b.is_finite()))
    {
        return Err(Error::NonPositiveBid { index, value });
    }
    let agents = (0..costs.len())
        .into_par_iter()
        .map(|i| {
            let opposing: Vec<f64> = candidate_bids
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| *b)
                .collect();
            best_response_report(u, i, candidate_bids[i], &opposing, costs.costs()[i])
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = agents.iter().all(|r| r.relative_gap <= tolerance);
    Ok(PneReport {
        mechanism: u.tag(),
        tolerance,
        agents,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    pub mechanism: &'static str,
    pub cost: f64,
    pub bid: f64,
    pub samples: usize,
    pub seed: u64,
    pub violations: usize,
    pub violation_fraction: f64,
    pub min_utility: f64,
}

impl SafetyReport {
    pub fn safe(&self) -> bool {
        self.violations == 0
    }
}

/// Bids the true cost against `samples` random opponent profiles (one to
/// four bids, log-uniform on `[1e-3 c, 1e3 c]`) and counts the profiles in
/// which utility drops below `-1e-12`.
pub fn ex_post_safety_check(
    u: &UtilityFunctional,
    cost: f64,
    samples: usize,
    seed: u64,
) -> Result<SafetyReport> {
    if !(cost > 0.0 && cost.is_finite()) {
        return Err(Error::NonPositiveCost {
            index: 0,
            value: cost,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            let k = rng.gen_range(1..=4);
            (0..k)
                .map(|_| cost * 10f64.powf(rng.gen_range(-3.0..=3.0)))
                .collect()
        })
        .collect();
    let utilities = profiles
        .par_iter()
        .map(|opp| u.utility(cost, opp, cost))
        .collect::<Result<Vec<_>>>()?;
    let violations = utilities.iter().filter(|v| **v < -1e-12).count();
    Ok(SafetyReport {
        mechanism: u.tag(),
        cost,
        bid: cost,
        samples,
        seed,
        violations,
        violation_fraction: if samples == 0 {
            0.0
        } else {
            violations as f64 / samples as f64
        },
        min_utility: utilities.iter().copied().fold(f64::INFINITY, f64::min),
    })
}
