//! Paid-as-bid procurement: α-proportional allocation, and each agent is
//! paid its own bid per unit of work, so `u_i = (b_i - c_i) x_i(b)`.
//!
//! For `α > n/(n-1)` the game has a unique pure equilibrium. Its allocation
//! equalizes `c_i f(x_i)` across agents, where
//!
//! `f(x) = x^(1/α) (1 - x) / (α(1 - x) - 1)`,  `0 ≤ x < 1 - 1/α`,
//!
//! and bids follow from `b_i = α c_i (1 - x_i) / (α(1 - x_i) - 1)`.
//! Taking a maximal-cost agent as reference, every allocation is a function
//! `g_i(d) = f⁻¹((c_ref / c_i) f(d))` of the reference share `d`, and the
//! equilibrium is the unique `d* ∈ (0, 1/n]` with `Σ g_i(d*) = 1`.

use rayon::prelude::*;
use serde::Serialize;

use crate::alpha_par::allocate_slice;
use crate::error::{Error, Result};
use crate::model::{price_of_anarchy, Allocation, CostVector, Outcome};
use crate::numerics::{lin_space, solve_bracketed, Bracket, SolverConfig};

/// Right end of the domain of `f`: equilibrium shares stay below it.
pub fn share_cap(alpha: f64) -> f64 {
    1.0 - 1.0 / alpha
}

fn require_alpha(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must exceed 1, got {alpha}"
        )))
    }
}

fn domain_error(x: f64, alpha: f64, open_left: bool) -> Error {
    let left = if open_left { "(0" } else { "[0" };
    Error::Domain {
        x,
        domain: format!("{left}, {})", share_cap(alpha)),
    }
}

/// `ln f(x)`; `-inf` at 0 and `+inf` once the denominator is exhausted.
fn ln_f(x: f64, alpha: f64) -> f64 {
    let denom = alpha * (1.0 - x) - 1.0;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    x.ln() / alpha + (1.0 - x).ln() - denom.ln()
}

pub fn f_alpha(x: f64, alpha: f64) -> Result<f64> {
    require_alpha(alpha)?;
    if !(x >= 0.0 && x < share_cap(alpha)) {
        return Err(domain_error(x, alpha, false));
    }
    Ok(x.powf(1.0 / alpha) * (1.0 - x) / (alpha * (1.0 - x) - 1.0))
}

/// `f'(x) / f(x)`.
fn log_derivative(x: f64, alpha: f64) -> f64 {
    1.0 / (alpha * x) + 1.0 / ((1.0 - x) * (alpha * (1.0 - x) - 1.0))
}

const INVERSE_MAX_ITER: usize = 2400;

/// Solves `ln f(x) = ln_y` by bisection run to floating-point exhaustion.
/// The upper end approaches the asymptote geometrically until it overshoots.
fn f_inverse_ln(ln_y: f64, alpha: f64) -> Result<f64> {
    if ln_y == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let cap = share_cap(alpha);
    let mut lo = 0.0;
    let mut hi = 0.5 * cap;
    let mut steps = 0;
    while ln_f(hi, alpha) < ln_y {
        lo = hi;
        hi = cap - 0.5 * (cap - hi);
        steps += 1;
        if steps > INVERSE_MAX_ITER {
            return Err(Error::NoConvergence {
                what: "f inverse (upper bracket)",
                iterations: steps,
            });
        }
    }
    for _ in 0..INVERSE_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            let err_lo = (ln_f(lo, alpha) - ln_y).abs();
            let err_hi = (ln_f(hi, alpha) - ln_y).abs();
            return Ok(if err_lo <= err_hi { lo } else { hi });
        }
        if ln_f(mid, alpha) < ln_y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        what: "f inverse",
        iterations: INVERSE_MAX_ITER,
    })
}

/// Inverse of [`f_alpha`] on `[0, ∞) → [0, 1 - 1/α)`.
pub fn f_inverse(y: f64, alpha: f64) -> Result<f64> {
    require_alpha(alpha)?;
    if !(y >= 0.0) || y.is_infinite() {
        return Err(Error::Domain {
            x: y,
            domain: "[0, inf)".into(),
        });
    }
    f_inverse_ln(y.ln(), alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PabSolution {
    pub allocation: Allocation,
    pub bids: Vec<f64>,
    /// Equilibrium share of the reference (maximal-cost) agent.
    pub d_star: f64,
    /// Largest relative gap between a bid and the first-order condition
    /// evaluated at the allocation those bids actually induce.
    pub residual_foc: f64,
    /// `|Σ x_i - 1|`.
    pub residual_sum: f64,
    /// Spread of `c_i f(x_i)` relative to their common target value.
    pub product_spread: f64,
    pub iterations: usize,
    pub outcome: Outcome,
}

/// Smallest α admitting an equilibrium with `n` agents (exclusive).
pub fn alpha_threshold(n: usize) -> f64 {
    n as f64 / (n as f64 - 1.0)
}

fn check_alpha_for(n: usize, alpha: f64) -> Result<()> {
    let bound = alpha_threshold(n);
    if !(alpha > bound) || !alpha.is_finite() {
        return Err(Error::AlphaTooSmall { alpha, n, bound });
    }
    Ok(())
}

/// Equilibrium bid for an agent with cost `c` receiving share `x`.
pub fn equilibrium_bid(c: f64, x: f64, alpha: f64) -> f64 {
    alpha * c * (1.0 - x) / (alpha * (1.0 - x) - 1.0)
}

struct Reference {
    /// `ln(c_ref / c_i)`, all nonnegative.
    ln_ratio: Vec<f64>,
    index: usize,
}

impl Reference {
    fn new(costs: &CostVector) -> Self {
        let c = costs.costs();
        // last maximal cost in input order; any maximal agent works
        let index = (0..c.len()).fold(0, |best, i| if c[i] >= c[best] { i } else { best });
        let ln_ref = c[index].ln();
        Reference {
            ln_ratio: c.iter().map(|ci| ln_ref - ci.ln()).collect(),
            index,
        }
    }

    fn shares(&self, d: f64, alpha: f64) -> Result<Vec<f64>> {
        let base = ln_f(d, alpha);
        self.ln_ratio
            .iter()
            .map(|r| f_inverse_ln(base + r, alpha))
            .collect()
    }

    fn total(&self, d: f64, alpha: f64) -> Result<f64> {
        Ok(self.shares(d, alpha)?.iter().sum())
    }
}

const NUDGE_LIMIT: usize = 64;
const PROBE_POINTS: usize = 100;

/// Unique pure equilibrium of the paid-as-bid game.
pub fn equilibrium(costs: &CostVector, alpha: f64) -> Result<PabSolution> {
    let n = costs.len();
    check_alpha_for(n, alpha)?;
    let reference = Reference::new(costs);
    let cap = share_cap(alpha);

    // uniqueness probe: the outer map must be increasing on (0, 1/n]
    let top = 1.0 / n as f64;
    let mut previous = f64::NEG_INFINITY;
    for k in 1..=PROBE_POINTS {
        let g = reference.total(top * k as f64 / PROBE_POINTS as f64, alpha)?;
        if g < previous {
            return Err(Error::NoConvergence {
                what: "paid-as-bid outer map is not monotone",
                iterations: k,
            });
        }
        previous = g;
    }

    // Errors inside the closure surface as NaN and are re-raised below.
    let excess = |d: f64| {
        reference
            .total(d, alpha)
            .map(|t| t - 1.0)
            .unwrap_or(f64::NAN)
    };

    let mut lo = 1e-15;
    while excess(lo) >= 0.0 {
        lo *= 1e-10;
        if lo < 1e-300 {
            return Err(Error::NoConvergence {
                what: "paid-as-bid outer bracket (lower)",
                iterations: 0,
            });
        }
    }
    let mut hi = 1.0 / n as f64;
    let mut step = 4.0 * f64::EPSILON * hi;
    let mut nudges = 0;
    while excess(hi) < 0.0 {
        nudges += 1;
        if nudges > NUDGE_LIMIT {
            return Err(Error::NoConvergence {
                what: "paid-as-bid outer bracket (upper)",
                iterations: nudges,
            });
        }
        hi = (hi + step).min(0.5 * (hi + cap));
        step *= 2.0;
    }

    let outer_cfg = SolverConfig {
        abs_tol: 1e-15,
        ..SolverConfig::default()
    };
    let root = solve_bracketed(excess, Bracket::new(lo, hi)?, &outer_cfg)?;
    if root.fx.is_nan() {
        reference.total(root.x, alpha)?;
    }
    let d_star = root.x;
    let shares = reference.shares(d_star, alpha)?;
    let residual_sum = (shares.iter().sum::<f64>() - 1.0).abs();
    let allocation = Allocation::with_tolerance(shares, 1e-10)?;

    let c = costs.costs();
    let x = allocation.shares();
    let bids: Vec<f64> = c
        .iter()
        .zip(x)
        .map(|(&ci, &xi)| equilibrium_bid(ci, xi, alpha))
        .collect();

    let induced = allocate_slice(&bids, alpha);
    let residual_foc = bids
        .iter()
        .zip(c)
        .zip(&induced)
        .map(|((b, &ci), &xi)| ((b - equilibrium_bid(ci, xi, alpha)) / b).abs())
        .fold(0.0, f64::max);

    let ln_target = c[reference.index].ln() + ln_f(d_star, alpha);
    let rel: Vec<f64> = c
        .iter()
        .zip(x)
        .map(|(ci, &xi)| (ci.ln() + ln_f(xi, alpha) - ln_target).exp())
        .collect();
    let product_spread = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - rel.iter().copied().fold(f64::INFINITY, f64::min);

    let payments = bids.iter().zip(x).map(|(b, xi)| b * xi).collect();
    let outcome = Outcome::new(costs, allocation.clone(), payments)?;

    Ok(PabSolution {
        allocation,
        bids,
        d_star,
        residual_foc,
        residual_sum,
        product_spread,
        iterations: root.iterations,
        outcome,
    })
}

/// Values of the outer map `g(d) = Σ g_i(d)` on `points` evenly spaced
/// points of `(0, 1/n]`; used to probe that `g` is strictly increasing.
pub fn outer_map_samples(costs: &CostVector, alpha: f64, points: usize) -> Result<Vec<f64>> {
    check_alpha_for(costs.len(), alpha)?;
    let reference = Reference::new(costs);
    let top = 1.0 / costs.len() as f64;
    (1..=points)
        .map(|k| reference.total(top * k as f64 / points as f64, alpha))
        .collect()
}

/// Equilibrium price of anarchy.
pub fn poa(costs: &CostVector, alpha: f64) -> Result<f64> {
    let sol = equilibrium(costs, alpha)?;
    price_of_anarchy(costs, &sol.allocation)
}

/// Paid-as-bid utility `(b - c) x` of bidding `bid` against `opposing` bids.
pub fn utility(cost: f64, bid: f64, opposing: &[f64], alpha: f64) -> f64 {
    let mut all = Vec::with_capacity(opposing.len() + 1);
    all.push(bid);
    all.extend_from_slice(opposing);
    (bid - cost) * allocate_slice(&all, alpha)[0]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PabWorstCaseScan {
    /// Worst vector among those with `max c_i = C`.
    pub argmax_vector: Vec<f64>,
    pub argmax_poa: f64,
    /// PoA of `[1, C, …, C]`.
    pub corner_poa: f64,
    /// Worst vector over the whole grid box `[1, C]^(n-1)`.
    pub unpinned_argmax_vector: Vec<f64>,
    pub unpinned_argmax_poa: f64,
    pub vectors_scanned: usize,
}

impl PabWorstCaseScan {
    pub fn corner_dominates(&self) -> bool {
        self.argmax_poa <= self.corner_poa + 1e-6
    }
}

/// Scans cost vectors `[1, c_2, …, c_n]` with `c_i` on an even grid of
/// `[1, C]`. The pinned scan keeps only vectors whose largest cost is `C`.
pub fn worst_case_scan(
    n: usize,
    big_c: f64,
    alpha: f64,
    grid_points: usize,
) -> Result<PabWorstCaseScan> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if !(big_c >= 1.0) || grid_points < 2 {
        return Err(Error::InvalidParameter(format!(
            "scan needs C >= 1 and at least 2 grid points (got C = {big_c}, {grid_points} points)"
        )));
    }
    check_alpha_for(n, alpha)?;
    let grid = lin_space(1.0, big_c, grid_points);
    let free = n - 1;
    let total = grid_points
        .checked_pow(free as u32)
        .filter(|t| *t <= 5_000_000)
        .ok_or_else(|| Error::InvalidParameter("scan grid too large".into()))?;

    let evaluated: Vec<(Vec<f64>, bool, f64)> = (0..total)
        .into_par_iter()
        .map(|mut code| {
            let mut v = vec![1.0; n];
            let mut pinned = false;
            for slot in v[1..].iter_mut().rev() {
                let k = code % grid_points;
                code /= grid_points;
                *slot = grid[k];
                pinned |= k + 1 == grid_points;
            }
            let value = poa(&CostVector::new(v.clone())?, alpha)?;
            Ok((v, pinned, value))
        })
        .collect::<Result<_>>()?;

    let pick = |pinned_only: bool| {
        evaluated
            .iter()
            .filter(|(_, pinned, _)| *pinned || !pinned_only)
            .fold(None::<&(Vec<f64>, bool, f64)>, |best, cand| match best {
                Some(b) if b.2 >= cand.2 => Some(b),
                _ => Some(cand),
            })
            .expect("grid is nonempty")
    };
    let pinned = pick(true);
    let unpinned = pick(false);
    let mut corner = vec![big_c; n];
    corner[0] = 1.0;
    Ok(PabWorstCaseScan {
        argmax_vector: pinned.0.clone(),
        argmax_poa: pinned.2,
        corner_poa: poa(&CostVector::new(corner)?, alpha)?,
        unpinned_argmax_vector: unpinned.0.clone(),
        unpinned_argmax_poa: unpinned.2,
        vectors_scanned: total,
    })
}

/// `Ψ(x) = (f(x) - x f'(x)) / f(x)²` on `(0, 1 - 1/α)`.
pub fn psi(x: f64, alpha: f64) -> Result<f64> {
    require_alpha(alpha)?;
    if !(x > 0.0 && x < share_cap(alpha)) {
        return Err(domain_error(x, alpha, true));
    }
    let fx = f_alpha(x, alpha)?;
    Ok((1.0 - x * log_derivative(x, alpha)) / fx)
}

/// `Φ_α(a) = 1/(α a) + 1/(α(1 - a) - 1)` on `(0, 1 - 1/α)`.
pub fn phi(a: f64, alpha: f64) -> Result<f64> {
    require_alpha(alpha)?;
    if !(a > 0.0 && a < share_cap(alpha)) {
        return Err(domain_error(a, alpha, true));
    }
    Ok(1.0 / (alpha * a) + 1.0 / (alpha * (1.0 - a) - 1.0))
}

/// Minimizer and minimum of [`phi`]: `((α - 1) / 2α, 4 / (α - 1))`.
pub fn phi_min(alpha: f64) -> Result<(f64, f64)> {
    require_alpha(alpha)?;
    Ok(((alpha - 1.0) / (2.0 * alpha), 4.0 / (alpha - 1.0)))
}

/// Equilibrium social cost along the ray `[1, r, …, r]` for each `r` in `r_grid`.
pub fn h_along_ray(n: usize, big_c: f64, alpha: f64, r_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if r_grid.iter().any(|r| !(*r >= 1.0 && *r <= big_c)) || r_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidParameter(format!(
            "ray grid must be increasing within [1, {big_c}]"
        )));
    }
    r_grid
        .par_iter()
        .map(|&r| {
            let mut c = vec![r; n];
            c[0] = 1.0;
            let sol = equilibrium(&CostVector::new(c)?, alpha)?;
            Ok((r, sol.outcome.social_cost))
        })
        .collect()
}
