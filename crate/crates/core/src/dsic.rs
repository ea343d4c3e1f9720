//! The truthful mechanism: α-proportional allocation with Myerson payments,
//! plus its worst-case social-cost analysis and the duplicate-bid weakness.

use serde::Serialize;

use crate::alpha_par::{allocate, allocate_slice, AlphaParam};
use crate::error::{Error, Result};
use crate::model::{BidVector, CostVector, Outcome};
use crate::numerics::{find_root_bracketed, integrate_tail, Bracket, SolverConfig};

fn require_payment_alpha(alpha: AlphaParam) -> Result<f64> {
    let a = alpha.value();
    if a > 1.0 {
        Ok(a)
    } else {
        Err(Error::DivergentPayment { alpha: a })
    }
}

fn require_worst_case_alpha(n: usize, alpha: AlphaParam) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    let a = alpha.value();
    if a > 1.0 {
        Ok(a)
    } else {
        Err(Error::InvalidParameter(format!(
            "worst-case analysis needs alpha > 1, got {a}"
        )))
    }
}

/// `ln Σ exp(v)` without overflow.
fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Myerson payment to agent `i`, normalized so that it vanishes as the
/// agent's own bid grows without bound:
///
/// `p_i = b_i x_i(b) + ∫_{b_i}^∞ dt / (1 + D_i t^α)`, `D_i = Σ_{j≠i} b_j^-α`.
///
/// The integral is evaluated as `b_i ∫_1^∞ ds / (1 + K s^α)` with
/// `K = D_i b_i^α = Σ_{j≠i} (b_i / b_j)^α` held in log form.
pub fn myerson_payment(i: usize, bids: &BidVector, alpha: AlphaParam) -> Result<f64> {
    let a = require_payment_alpha(alpha)?;
    let b = bids.bids();
    if b.len() < 2 {
        return Err(Error::TooFewAgents(b.len()));
    }
    if i >= b.len() {
        return Err(Error::InvalidParameter(format!(
            "agent index {i} out of range for {} bids",
            b.len()
        )));
    }
    let own = b[i];
    let ln_k = log_sum_exp(
        b.iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, bj)| a * (own / bj).ln()),
    );

    let first = own * allocate_slice(b, a)[i];
    let integrand = |s: f64| {
        let z = ln_k + a * s.ln();
        if z > 700.0 {
            (-z).exp()
        } else {
            1.0 / (1.0 + z.exp())
        }
    };
    let tail = integrate_tail(integrand, 1.0, a, &SolverConfig::default())?;
    Ok(first + own * tail)
}

/// Runs the mechanism on reported costs, scoring utilities against true costs.
pub fn outcome(reported: &BidVector, truth: &CostVector, alpha: AlphaParam) -> Result<Outcome> {
    require_payment_alpha(alpha)?;
    if reported.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: reported.len(),
        });
    }
    let allocation = allocate(reported, alpha);
    let payments = (0..reported.len())
        .map(|i| myerson_payment(i, reported, alpha))
        .collect::<Result<Vec<_>>>()?;
    Outcome::new(truth, allocation, payments)
}

/// Utility of agent `i` with true cost `cost` when reporting `report` against `bids`.
pub fn deviation_utility(
    i: usize,
    bids: &BidVector,
    report: f64,
    cost: f64,
    alpha: AlphaParam,
) -> Result<f64> {
    let deviated = bids.with_bid(i, report)?;
    let share = allocate_slice(deviated.bids(), alpha.value())[i];
    Ok(myerson_payment(i, &deviated, alpha)? - cost * share)
}

/// Truthful social cost `Σ c_i^(1-α) / Σ c_i^-α`, evaluated on costs
/// normalized by their minimum.
pub fn social_cost_closed_form(costs: &CostVector, alpha: AlphaParam) -> f64 {
    let a = alpha.value();
    let cmin = costs.min();
    let (mut num, mut den) = (0.0, 0.0);
    for c in costs.costs() {
        let r = c / cmin;
        let w = r.powf(-a);
        num += r * w;
        den += w;
    }
    cmin * num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DsicWorstCase {
    pub n: usize,
    pub alpha: f64,
    pub r_star: f64,
    pub worst_social_cost: f64,
    pub upper_bound: f64,
}

fn first_order_residual(x: f64, n: usize, a: f64) -> f64 {
    a + x * (1.0 - a) + (n as f64 - 1.0) * x.powf(1.0 - a)
}

/// The ratio `r* > 1` at which cost vectors `[1, r, …, r]` have the largest
/// truthful social cost; root of `α + r(1-α) + (n-1) r^(1-α)`.
pub fn worst_case_r(n: usize, alpha: AlphaParam) -> Result<f64> {
    let a = require_worst_case_alpha(n, alpha)?;
    let hi = 2.0 * (a + n as f64) / (a - 1.0) + 2.0;
    find_root_bracketed(
        |x| first_order_residual(x, n, a),
        Bracket::new(1.0, hi)?,
        &SolverConfig::default(),
    )
}

/// Social cost of `[1, r, …, r]` with `n - 1` copies of `r`.
pub fn ray_social_cost(n: usize, r: f64, alpha: f64) -> f64 {
    let m = n as f64 - 1.0;
    (1.0 + m * r.powf(1.0 - alpha)) / (1.0 + m * r.powf(-alpha))
}

pub fn worst_case_social_cost(n: usize, alpha: AlphaParam) -> Result<DsicWorstCase> {
    let a = require_worst_case_alpha(n, alpha)?;
    let r_star = worst_case_r(n, alpha)?;
    Ok(DsicWorstCase {
        n,
        alpha: a,
        r_star,
        worst_social_cost: ray_social_cost(n, r_star, a),
        upper_bound: 1.0 + (n as f64 / a).powf(1.0 / a),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseScan {
    pub argmax: Vec<f64>,
    pub worst_social_cost: f64,
    /// All non-first coordinates of the argmax are identical.
    pub free_coords_equal: bool,
    /// All non-first coordinates of the argmax sit on one or two adjacent grid points.
    pub free_coords_within_grid_step: bool,
    pub vectors_scanned: usize,
}

const MAX_SCAN_VECTORS: usize = 20_000_000;

/// Exhaustive scan of `[1, c_2, …, c_n]` with every `c_i` drawn from `grid`.
pub fn worst_case_scan(n: usize, alpha: AlphaParam, grid: &[f64]) -> Result<WorstCaseScan> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidParameter(
            "scan grid must be nonempty and positive".into(),
        ));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let free = n - 1;
    let total = sorted
        .len()
        .checked_pow(free as u32)
        .filter(|t| *t <= MAX_SCAN_VECTORS)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "scan over {} points in {free} coordinates too large",
                sorted.len()
            ))
        })?;

    let mut idx = vec![0usize; free];
    let mut costs = vec![1.0; n];
    let mut best = (f64::NEG_INFINITY, idx.clone());
    for _ in 0..total {
        for (slot, &k) in costs[1..].iter_mut().zip(&idx) {
            *slot = sorted[k];
        }
        let sc = social_cost_closed_form(&CostVector::new(costs.clone())?, alpha);
        if sc > best.0 {
            best = (sc, idx.clone());
        }
        // odometer increment
        for k in idx.iter_mut().rev() {
            *k += 1;
            if *k < sorted.len() {
                break;
            }
            *k = 0;
        }
    }

    let (worst, best_idx) = best;
    let lo = *best_idx.iter().min().expect("n >= 2");
    let hi = *best_idx.iter().max().expect("n >= 2");
    let mut argmax = vec![1.0];
    argmax.extend(best_idx.iter().map(|&k| sorted[k]));
    Ok(WorstCaseScan {
        argmax,
        worst_social_cost: worst,
        free_coords_equal: lo == hi,
        free_coords_within_grid_step: hi - lo <= 1,
        vectors_scanned: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SybilReport {
    pub single_alloc: f64,
    pub sybil_alloc: f64,
}

impl SybilReport {
    pub fn sybil_gains(&self) -> bool {
        self.sybil_alloc > self.single_alloc
    }
}

/// Agent 0 submits its truthful bid under `duplicates` identities; compares
/// the total work it receives with what a single bid earns.
pub fn sybil_counterexample(
    costs: &CostVector,
    alpha: AlphaParam,
    duplicates: usize,
) -> Result<SybilReport> {
    if duplicates == 0 {
        return Err(Error::InvalidParameter(
            "duplicates must be at least 1".into(),
        ));
    }
    let c = costs.costs();
    let single_alloc = allocate_slice(c, alpha.value())[0];
    let mut bids = vec![c[0]; duplicates];
    bids.extend_from_slice(&c[1..]);
    let sybil_alloc = allocate_slice(&bids, alpha.value())[..duplicates]
        .iter()
        .sum();
    Ok(SybilReport {
        single_alloc,
        sybil_alloc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{lin_space, log_space};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn a(v: f64) -> AlphaParam {
        AlphaParam::new(v).unwrap()
    }
    fn bids(v: &[f64]) -> BidVector {
        BidVector::new(v.to_vec()).unwrap()
    }
    fn costs(v: &[f64]) -> CostVector {
        CostVector::new(v.to_vec()).unwrap()
    }

    /// α = 2: ∫_b^∞ dt / (1 + D t²) = (π/2 - atan(√D b)) / √D.
    fn arctan_payment(i: usize, b: &[f64]) -> f64 {
        let d: f64 = b
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v.powi(-2))
            .sum();
        let bi = b[i];
        bi / (1.0 + d * bi * bi) + (FRAC_PI_2 - (d.sqrt() * bi).atan()) / d.sqrt()
    }

    #[test]
    fn payment_examples() {
        let p = myerson_payment(0, &bids(&[1.0, 1.0]), a(2.0)).unwrap();
        assert_abs_diff_eq!(p, 0.5 + FRAC_PI_4, epsilon = 1e-10);
        assert_abs_diff_eq!(p, 1.285_398_16, epsilon = 1e-8);
        let p = myerson_payment(0, &bids(&[1.0, 2.0]), a(2.0)).unwrap();
        assert_abs_diff_eq!(p, 3.014_297_435_588_181, epsilon = 1e-9);
        let p = myerson_payment(0, &bids(&[1e6, 1.0]), a(2.0)).unwrap();
        assert!(p <= 1e-5 && p > 0.0, "{p}");
    }

    #[test]
    fn payment_needs_alpha_above_one() {
        assert!(matches!(
            myerson_payment(0, &bids(&[1.0, 1.0]), a(1.0)),
            Err(Error::DivergentPayment { .. })
        ));
        assert!(myerson_payment(2, &bids(&[1.0, 1.0]), a(2.0)).is_err());
    }

    #[test]
    fn outcome_examples() {
        let o = outcome(&bids(&[1.0, 1.0]), &costs(&[1.0, 1.0]), a(2.0)).unwrap();
        assert_eq!(o.allocation.shares(), &[0.5, 0.5]);
        for (p, u) in o.payments.iter().zip(&o.utilities) {
            assert_abs_diff_eq!(*p, 0.5 + FRAC_PI_4, epsilon = 1e-10);
            assert_abs_diff_eq!(*u, FRAC_PI_4, epsilon = 1e-10);
        }
        let o = outcome(&bids(&[1.0, 2.0]), &costs(&[1.0, 2.0]), a(2.0)).unwrap();
        assert_abs_diff_eq!(o.allocation.shares()[0], 0.8, epsilon = 1e-15);
        assert!(o.utilities.iter().all(|u| *u >= 0.0));
    }

    #[test]
    fn truthful_report_dominates_grid() {
        let b = bids(&[1.0, 1.7, 3.0]);
        let truthful = deviation_utility(0, &b, 1.0, 1.0, a(2.0)).unwrap();
        for dev in log_space(0.1, 50.0, 120) {
            let u = deviation_utility(0, &b, dev, 1.0, a(2.0)).unwrap();
            assert!(truthful >= u - 1e-9, "deviation {dev}: {u} > {truthful}");
        }
    }

    #[test]
    fn closed_form_social_cost_examples() {
        assert_abs_diff_eq!(
            social_cost_closed_form(&costs(&[1.0, 2.0]), a(2.0)),
            1.2,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            social_cost_closed_form(&costs(&[3.5, 3.5, 3.5]), a(1.7)),
            3.5,
            epsilon = 1e-14
        );
        let r = 1.0 + 2f64.sqrt();
        assert_abs_diff_eq!(
            social_cost_closed_form(&costs(&[1.0, r]), a(2.0)),
            1.207_106_78,
            epsilon = 1e-8
        );
    }

    #[test]
    fn worst_case_r_examples() {
        assert_abs_diff_eq!(
            worst_case_r(2, a(2.0)).unwrap(),
            1.0 + 2f64.sqrt(),
            epsilon = 1e-10
        );
        // bisection oracle (scipy brentq) on 2x³ - 3x² - 1 = 0
        let r = worst_case_r(2, a(3.0)).unwrap();
        assert_abs_diff_eq!(r, 1.677_650_698_804_06, epsilon = 1e-10);
        assert!((2.0 * r.powi(3) - 3.0 * r * r - 1.0).abs() < 1e-9);
        for n in [2, 3, 7, 40] {
            for alpha in [1.01, 1.5, 3.0, 9.0] {
                let hi = 2.0 * (alpha + n as f64) / (alpha - 1.0) + 2.0;
                assert_eq!(first_order_residual(1.0, n, alpha), n as f64);
                assert!(first_order_residual(hi, n, alpha) < 0.0);
            }
        }
        assert!(worst_case_r(2, a(1.0)).is_err());
        assert!(worst_case_r(1, a(2.0)).is_err());
    }

    #[test]
    fn r_star_maximizes_ray_cost() {
        for (n, alpha) in [(2, 2.0), (3, 3.0), (16, 4.0), (5, 1.5)] {
            let r = worst_case_r(n, a(alpha)).unwrap();
            let peak = ray_social_cost(n, r, alpha);
            for x in lin_space(1.0, 4.0 * r, 2000) {
                assert!(ray_social_cost(n, x, alpha) <= peak + 1e-12);
            }
        }
    }

    #[test]
    fn worst_case_examples() {
        let w = worst_case_social_cost(2, a(2.0)).unwrap();
        assert_abs_diff_eq!(w.worst_social_cost, 1.207_106_78, epsilon = 1e-8);
        assert_abs_diff_eq!(
            w.worst_social_cost,
            1.0 + (2f64.sqrt() - 1.0) / 2.0,
            epsilon = 1e-12
        );
        assert_eq!(w.upper_bound, 2.0);
        let w = worst_case_social_cost(16, a(4.0)).unwrap();
        assert_abs_diff_eq!(w.upper_bound, 1.0 + 2f64.sqrt(), epsilon = 1e-12);
        let w = worst_case_social_cost(2, a(5.0)).unwrap();
        assert_abs_diff_eq!(w.upper_bound, 1.832_553_2, epsilon = 1e-6);
        assert!(w.worst_social_cost < w.upper_bound);
        // closed form 1 + T(r*)/α agrees with the direct ratio
        let t = (w.n as f64 - 1.0) * w.r_star.powf(1.0 - w.alpha);
        assert_abs_diff_eq!(w.worst_social_cost, 1.0 + t / w.alpha, epsilon = 1e-10);
    }

    #[test]
    fn scan_examples() {
        let s = worst_case_scan(3, a(2.0), &[1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
        assert_eq!(s.argmax, vec![1.0, 2.5, 2.5]);
        assert!(s.free_coords_equal);
        let s = worst_case_scan(2, a(4.0), &[1.0, 2.0, 3.0]).unwrap();
        assert!(s.free_coords_equal);
        let s = worst_case_scan(3, a(3.0), &log_space(1.0, 5.0, 25)).unwrap();
        assert!(s.free_coords_equal, "{:?}", s.argmax);
        assert_abs_diff_eq!(s.argmax[1], 1.828_579_099_979_574_6, epsilon = 1e-12);
        assert_eq!(s.vectors_scanned, 625);
    }

    #[test]
    fn sybil_examples() {
        let r = sybil_counterexample(&costs(&[1.0, 2.0]), a(2.0), 2).unwrap();
        assert_abs_diff_eq!(r.single_alloc, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(r.sybil_alloc, 2.0 / 2.25, epsilon = 1e-15);
        assert!(r.sybil_gains());
        let r = sybil_counterexample(&costs(&[1.0, 1.0]), a(2.0), 2).unwrap();
        assert_abs_diff_eq!(r.sybil_alloc, 2.0 / 3.0, epsilon = 1e-15);
        let r = sybil_counterexample(&costs(&[1.0, 3.0]), a(2.0), 1).unwrap();
        assert_eq!(r.sybil_alloc, r.single_alloc);
        assert!(!r.sybil_gains());
    }

    #[test]
    fn social_cost_not_monotone_in_second_cost() {
        let curve: Vec<f64> = lin_space(1.0, 10.0, 400)
            .into_iter()
            .map(|c2| social_cost_closed_form(&costs(&[1.0, c2]), a(4.0)))
            .collect();
        let (peak_idx, peak) =
            curve
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
                    if *v > acc.1 {
                        (i, *v)
                    } else {
                        acc
                    }
                });
        assert!(peak_idx > 0 && peak_idx < curve.len() - 1);
        assert!(*curve.last().unwrap() < peak);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn payment_first_term_and_quadrature(b in proptest::collection::vec(0.05f64..20.0, 2..4), i in 0usize..4) {
            let i = i % b.len();
            let p = myerson_payment(i, &bids(&b), a(2.0)).unwrap();
            let exact = arctan_payment(i, &b);
            prop_assert!((p - exact).abs() <= 1e-9 * exact, "{} vs {}", p, exact);
        }

        #[test]
        fn closed_form_matches_direct(c in proptest::collection::vec(0.1f64..50.0, 2..6), alpha in 0.2f64..8.0) {
            let costs = costs(&c);
            let direct = crate::model::social_cost(&costs, &allocate(&costs.as_bids(), a(alpha))).unwrap();
            let closed = social_cost_closed_form(&costs, a(alpha));
            prop_assert!((direct - closed).abs() <= 1e-12 * direct.max(1.0));
        }

        #[test]
        fn worst_case_within_bound(n in 2usize..40, alpha in 1.01f64..12.0) {
            let w = worst_case_social_cost(n, a(alpha)).unwrap();
            prop_assert!(w.r_star > 1.0);
            prop_assert!(w.worst_social_cost <= w.upper_bound);
        }

        #[test]
        fn truthful_is_individually_rational(c in proptest::collection::vec(0.1f64..10.0, 2..5), alpha in 1.05f64..6.0) {
            let o = outcome(&bids(&c), &costs(&c), a(alpha)).unwrap();
            prop_assert!(o.utilities.iter().all(|u| *u >= -1e-10));
        }
    }
}
