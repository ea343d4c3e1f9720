//! Tullock procurement contests.
//!
//! Work and a reward pool `B` are split in proportion to bids and every
//! bidder forfeits its bid, so agent `i` faces a standard Tullock contest
//! with value `v_i = max(B - c_i, 0)`. The unique equilibrium allocation is
//! `x_i = max(1 - v*/v_i, 0)` where `Σ_i max(1 - v*/v_i, 0) = 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{price_of_anarchy, Allocation, CostVector, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Budget(f64);

impl Budget {
    pub fn new(budget: f64) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "budget must be positive, got {budget}"
            )));
        }
        Ok(Budget(budget))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn values(costs: &CostVector, budget: Budget) -> Vec<f64> {
    costs
        .costs()
        .iter()
        .map(|c| (budget.value() - c).max(0.0))
        .collect()
}

/// `F(v) = Σ_i max(1 - v / v_i, 0)` over agents with positive value.
pub fn participation(values: &[f64], v: f64) -> f64 {
    values
        .iter()
        .filter(|vi| **vi > 0.0)
        .map(|vi| (1.0 - v / vi).max(0.0))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TullockSolution {
    pub values: Vec<f64>,
    pub v_star: f64,
    pub allocation: Allocation,
    /// Zero for agents that sit out.
    pub bids: Vec<f64>,
    pub outcome: Outcome,
    pub active_count: usize,
    /// Active-prefix sizes examined before the consistent one was found.
    pub prefixes_tested: usize,
}

/// Solves for the unique pure equilibrium.
///
/// Values are sorted descending (stable, so ties keep input order) and the
/// prefixes `k = 2..n` are tried in turn: `v* = (k - 1) / Σ_{i≤k} 1/v_i` is
/// consistent when `v* < v_k` and the next value (if any) is `≤ v*`.
/// At equilibrium the total bid equals `v*`, so `b_i = x_i v*`.
pub fn equilibrium(costs: &CostVector, budget: Budget) -> Result<TullockSolution> {
    let vals = values(costs, budget);
    let positive = vals.iter().filter(|v| **v > 0.0).count();
    if positive < 2 {
        return Err(Error::NoEquilibrium);
    }

    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));

    let mut inverse_sum = 1.0 / vals[order[0]];
    let mut found = None;
    let mut tested = 0;
    for k in 2..=positive {
        tested += 1;
        let vk = vals[order[k - 1]];
        inverse_sum += 1.0 / vk;
        let v_star = (k as f64 - 1.0) / inverse_sum;
        let next_ok = k == vals.len() || vals[order[k]] <= v_star;
        if v_star < vk && next_ok {
            found = Some((k, v_star));
            break;
        }
    }
    // F is continuous and strictly decreasing on the positive values, so
    // some prefix is always consistent.
    let (active_count, v_star) = found.ok_or(Error::NoConvergence {
        what: "Tullock active set",
        iterations: tested,
    })?;

    let shares: Vec<f64> = vals
        .iter()
        .map(|&v| if v > v_star { 1.0 - v_star / v } else { 0.0 })
        .collect();
    let allocation = Allocation::with_tolerance(shares, 1e-10)?;
    let bids: Vec<f64> = allocation.shares().iter().map(|x| x * v_star).collect();
    let payments = allocation
        .shares()
        .iter()
        .zip(&bids)
        .map(|(x, b)| budget.value() * x - b)
        .collect();
    let outcome = Outcome::new(costs, allocation.clone(), payments)?;

    Ok(TullockSolution {
        values: vals,
        v_star,
        allocation,
        bids,
        outcome,
        active_count,
        prefixes_tested: tested,
    })
}

/// Upper bound `(B / c_min + 3) / 4` on the equilibrium price of anarchy.
pub fn poa_bound(costs: &CostVector, budget: Budget) -> Result<f64> {
    let cmin = costs.min();
    if budget.value() <= cmin {
        return Err(Error::InvalidParameter(format!(
            "PoA bound needs budget above the lowest cost ({} <= {cmin})",
            budget.value()
        )));
    }
    Ok((budget.value() / cmin + 3.0) / 4.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub budget: f64,
    pub allocation: Allocation,
    pub social_cost: f64,
    pub poa: f64,
    pub poa_bound: f64,
}

/// One independent equilibrium per budget, in input order. Budgets without
/// an equilibrium yield an `Err` row.
pub fn budget_sweep(costs: &CostVector, budgets: &[f64]) -> Vec<Result<SweepRow>> {
    use rayon::prelude::*;
    budgets
        .par_iter()
        .map(|&b| {
            let budget = Budget::new(b)?;
            let sol = equilibrium(costs, budget)?;
            Ok(SweepRow {
                budget: b,
                social_cost: sol.outcome.social_cost,
                poa: price_of_anarchy(costs, &sol.allocation)?,
                poa_bound: poa_bound(costs, budget)?,
                allocation: sol.allocation,
            })
        })
        .collect()
}

/// Contest utility `b/(b + β) · (B - c) - b` of a single bid against total opposing bid β.
pub fn contest_utility(cost: f64, bid: f64, opposing_total: f64, budget: Budget) -> f64 {
    let total = bid + opposing_total;
    if total <= 0.0 {
        return 0.0;
    }
    bid / total * (budget.value() - cost) - bid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SybilEquivalence {
    pub split_utility: f64,
    pub merged_utility: f64,
}

impl SybilEquivalence {
    pub fn equal(&self) -> bool {
        (self.split_utility - self.merged_utility).abs()
            <= 1e-12 * self.merged_utility.abs().max(1.0)
    }
}

/// Utility from bidding under several identities versus one merged bid.
pub fn sybil_equivalence(
    cost: f64,
    budget: Budget,
    split: &[f64],
    opposing_total: f64,
) -> Result<SybilEquivalence> {
    if split.iter().any(|b| !(*b >= 0.0)) || !(opposing_total >= 0.0) {
        return Err(Error::InvalidParameter(
            "split bids and opposing total must be nonnegative".into(),
        ));
    }
    let merged: f64 = split.iter().sum();
    let total = merged + opposing_total;
    let split_utility = if total > 0.0 {
        split
            .iter()
            .map(|b| b / total * (budget.value() - cost) - b)
            .sum()
    } else {
        0.0
    };
    Ok(SybilEquivalence {
        split_utility,
        merged_utility: contest_utility(cost, merged, opposing_total, budget),
    })
}

/// An opposing total bid β under which bidding `bid` loses money:
/// `β = 2 max(B - c - b, b)`.
pub fn negative_utility_witness(cost: f64, bid: f64, budget: Budget) -> Result<f64> {
    if !(bid > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "witness needs a positive bid, got {bid}"
        )));
    }
    if !(budget.value() > cost) {
        return Err(Error::InvalidParameter(format!(
            "witness needs budget above cost ({} <= {cost})",
            budget.value()
        )));
    }
    Ok(2.0 * (budget.value() - cost - bid).max(bid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::log_space;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(v: &[f64]) -> CostVector {
        CostVector::new(v.to_vec()).unwrap()
    }
    fn b(v: f64) -> Budget {
        Budget::new(v).unwrap()
    }

    #[test]
    fn value_examples() {
        assert_eq!(values(&c(&[1.0, 3.0]), b(5.0)), vec![4.0, 2.0]);
        assert_eq!(values(&c(&[1.0, 10.0]), b(5.0)), vec![4.0, 0.0]);
        assert_eq!(values(&c(&[5.0, 5.0]), b(5.0)), vec![0.0, 0.0]);
    }

    #[test]
    fn symmetric_equilibrium() {
        let s = equilibrium(&c(&[1.0, 1.0]), b(5.0)).unwrap();
        assert_abs_diff_eq!(s.v_star, 2.0, epsilon = 1e-12);
        for i in 0..2 {
            assert_abs_diff_eq!(s.allocation.shares()[i], 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(s.bids[i], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s.outcome.payments[i], 1.5, epsilon = 1e-12);
            assert_abs_diff_eq!(s.outcome.utilities[i], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn asymmetric_equilibrium() {
        let s = equilibrium(&c(&[1.0, 3.0]), b(5.0)).unwrap();
        assert_abs_diff_eq!(s.v_star, 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.allocation.shares()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.allocation.shares()[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.bids[0], 8.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.bids[1], 4.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.outcome.social_cost, 5.0 / 3.0, epsilon = 1e-12);
        assert_eq!(s.active_count, 2);
    }

    #[test]
    fn needs_two_positive_values() {
        assert_eq!(
            equilibrium(&c(&[1.0, 10.0]), b(5.0)).unwrap_err(),
            Error::NoEquilibrium
        );
        assert_eq!(
            equilibrium(&c(&[5.0, 5.0]), b(5.0)).unwrap_err(),
            Error::NoEquilibrium
        );
    }

    #[test]
    fn inactive_agents_sit_out() {
        // v = (9, 1, 8); the top two alone give v* = 72/17 > 1, so agent 1 sits out
        let s = equilibrium(&c(&[1.0, 9.0, 2.0]), b(10.0)).unwrap();
        let v_star_two = 1.0 / (1.0 / 9.0 + 1.0 / 8.0);
        assert!(v_star_two > 1.0);
        assert_abs_diff_eq!(s.v_star, v_star_two, epsilon = 1e-12);
        assert_eq!(s.allocation.shares()[1], 0.0);
        assert_eq!(s.bids[1], 0.0);
        assert_eq!(s.outcome.payments[1], 0.0);
        assert_eq!(s.outcome.utilities[1], 0.0);
        assert_eq!(s.active_count, 2);
    }

    #[test]
    fn poa_bound_examples() {
        assert_eq!(poa_bound(&c(&[1.0, 2.0]), b(5.0)).unwrap(), 2.0);
        assert!(poa_bound(&c(&[1.0, 2.0]), b(1.0)).is_err());
        assert_abs_diff_eq!(
            poa_bound(&c(&[1.0, 2.0]), b(1.0 + 1e-12)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let s = equilibrium(&c(&[1.0, 3.0]), b(5.0)).unwrap();
        assert!(price_of_anarchy(&c(&[1.0, 3.0]), &s.allocation).unwrap() <= 2.0);
    }

    #[test]
    fn sweep_examples() {
        let rows = budget_sweep(&c(&[1.0, 2.0, 3.0]), &[1e6]);
        let row = rows[0].as_ref().unwrap();
        for x in row.allocation.shares() {
            assert!((x - 1.0 / 3.0).abs() <= 1e-4);
        }
        for row in budget_sweep(&c(&[1.0, 1.0]), &[1.5, 3.0, 100.0]) {
            let row = row.unwrap();
            assert_abs_diff_eq!(row.allocation.shares()[0], 0.5, epsilon = 1e-12);
        }
        let rows = budget_sweep(&c(&[1.0, 2.0, 2.0]), &[2.0 + 1e-9]);
        let x = rows[0].as_ref().unwrap().allocation.shares().to_vec();
        // v ≈ (1, 1e-9, 1e-9): the high-cost agents barely participate
        assert!(x[1] < 1e-6 && x[2] < 1e-6);
        assert!(x[0] > 1.0 - 1e-5);
        let rows = budget_sweep(&c(&[1.0, 10.0]), &[5.0, 20.0]);
        assert_eq!(rows[0].as_ref().unwrap_err(), &Error::NoEquilibrium);
        assert!(rows[1].is_ok());
    }

    #[test]
    fn sybil_examples() {
        let r = sybil_equivalence(1.0, b(5.0), &[0.5, 0.5], 1.0).unwrap();
        assert_abs_diff_eq!(r.split_utility, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.merged_utility, 1.0, epsilon = 1e-12);
        let r = sybil_equivalence(1.0, b(5.0), &[1.0], 1.0).unwrap();
        assert_eq!(r.split_utility, r.merged_utility);
        let r = sybil_equivalence(2.0, b(10.0), &[0.3, 0.7, 1.0], 3.0).unwrap();
        assert!(r.equal());
        assert!(sybil_equivalence(2.0, b(10.0), &[-0.3], 3.0).is_err());
    }

    #[test]
    fn witness_examples() {
        let beta = negative_utility_witness(1.0, 1.0, b(5.0)).unwrap();
        assert_eq!(beta, 6.0);
        assert!(contest_utility(1.0, 1.0, beta, b(5.0)) < 0.0);
        assert_abs_diff_eq!(
            contest_utility(1.0, 1.0, 4.0, b(5.0)),
            -0.2,
            epsilon = 1e-12
        );
        assert_eq!(contest_utility(1.0, 0.0, 123.0, b(5.0)), 0.0);
        assert!(negative_utility_witness(1.0, 0.0, b(5.0)).is_err());
        assert_abs_diff_eq!(
            contest_utility(4.0, 0.5, 2.0, b(5.0)),
            -0.3,
            epsilon = 1e-12
        );
        let beta = negative_utility_witness(4.0, 0.5, b(5.0)).unwrap();
        assert!(contest_utility(4.0, 0.5, beta, b(5.0)) < 0.0);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (proptest::collection::vec(0.1f64..10.0, 2..7), 0.01f64..20.0).prop_map(|(costs, extra)| {
            let mut sorted = costs.clone();
            sorted.sort_by(f64::total_cmp);
            (costs, sorted[1] + extra)
        })
    }

    proptest! {
        #[test]
        fn equilibrium_invariants((costs, budget) in instance()) {
            let cv = c(&costs);
            let s = equilibrium(&cv, b(budget)).unwrap();
            let x = s.allocation.shares();
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(s.active_count >= 2);
            prop_assert!((participation(&s.values, s.v_star) - 1.0).abs() <= 1e-10);
            let poa = price_of_anarchy(&cv, &s.allocation).unwrap();
            prop_assert!(poa <= poa_bound(&cv, b(budget)).unwrap() + 1e-9);
            let vmax = s.values.iter().copied().fold(0.0, f64::max);
            let welfare: f64 = s.values.iter().zip(x).map(|(v, x)| v * x).sum();
            prop_assert!(welfare >= 0.75 * vmax - 1e-9);
            for i in 0..x.len() {
                for j in 0..x.len() {
                    if s.values[i] >= s.values[j] {
                        prop_assert!(x[i] >= x[j] - 1e-12);
                    }
                }
            }
        }

        #[test]
        fn budget_growth_flattens_allocation(costs in proptest::collection::vec(0.1f64..10.0, 2..6)) {
            let mut sorted = costs.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            prop_assume!(sorted.len() == costs.len());
            let budgets = log_space(sorted[1] + 0.01, 1e7, 60);
            let mut last = f64::INFINITY;
            for row in budget_sweep(&c(&costs), &budgets) {
                let top = row.unwrap().allocation.shares().iter().copied().fold(0.0, f64::max);
                prop_assert!(top <= last + 1e-12);
                last = top;
            }
        }

        #[test]
        fn splitting_is_neutral(cost in 0.1f64..5.0, extra in 0.1f64..20.0, split in proptest::collection::vec(0.0f64..5.0, 1..6), beta in 0.0f64..10.0) {
            let r = sybil_equivalence(cost, b(cost + extra), &split, beta).unwrap();
            prop_assert!(r.equal(), "{:?}", r);
        }
    }
}
