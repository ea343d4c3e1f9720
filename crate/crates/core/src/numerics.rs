//! Scalar numerical kernels shared by the mechanism solvers.
//!
//! * [`find_root_bracketed`]: safeguarded secant/bisection on a sign-changing bracket.
//! * [`integrate_tail`]: improper integrals `∫_lower^∞ g(t) dt` for integrands
//!   decaying like `t^-alpha`, via `u = 1/t` and dyadic panels graded toward `u = 0`.
//! * [`minimize_on_simplex_grid`]: exhaustive search over a discretized unit simplex.

use crate::error::{Error, Result};
use crate::model::Allocation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "bracket requires finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Bracket { lo, hi })
    }
}

/// Tolerances for the iterative kernels. `abs_tol` drives root finding,
/// `rel_tol` drives quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl SolverConfig {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && rel_tol > 0.0 && max_iter >= 1) {
            return Err(Error::InvalidParameter(format!(
                "solver config needs abs_tol > 0, rel_tol > 0, max_iter >= 1 \
                 (got {abs_tol}, {rel_tol}, {max_iter})"
            )));
        }
        Ok(SolverConfig {
            abs_tol,
            rel_tol,
            max_iter,
        })
    }
}

/// A located root together with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Finds a root of `f` inside `bracket`. See [`solve_bracketed`].
pub fn find_root_bracketed<F>(f: F, bracket: Bracket, cfg: &SolverConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    solve_bracketed(f, bracket, cfg).map(|r| r.x)
}

/// Secant steps are taken while they land strictly inside the bracket; any
/// iteration that fails to halve the bracket is followed by a bisection step,
/// so the width at least halves per iteration.
///
/// Stops when `|f(x)| <= abs_tol`, when the bracket is narrower than
/// `abs_tol`, or when no representable midpoint remains.
pub fn solve_bracketed<F>(f: F, bracket: Bracket, cfg: &SolverConfig) -> Result<Root>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            fx: fa,
            iterations: 0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            fx: fb,
            iterations: 0,
        });
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo: a, hi: b });
    }

    let best = |a: f64, fa: f64, b: f64, fb: f64, iterations: usize| {
        if fa.abs() <= fb.abs() {
            Root {
                x: a,
                fx: fa,
                iterations,
            }
        } else {
            Root {
                x: b,
                fx: fb,
                iterations,
            }
        }
    };

    for it in 1..=cfg.max_iter {
        let width = b - a;

        let secant = b - fb * (b - a) / (fb - fa);
        let x = if secant > a && secant < b {
            secant
        } else {
            0.5 * (a + b)
        };
        let fx = f(x);
        if fx.abs() <= cfg.abs_tol {
            return Ok(Root {
                x,
                fx,
                iterations: it,
            });
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }

        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                return Ok(best(a, fa, b, fb, it));
            }
            let fm = f(m);
            if fm.abs() <= cfg.abs_tol {
                return Ok(Root {
                    x: m,
                    fx: fm,
                    iterations: it,
                });
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }

        let m = 0.5 * (a + b);
        if b - a <= cfg.abs_tol || m <= a || m >= b {
            return Ok(best(a, fa, b, fb, it));
        }
    }
    Err(Error::NoConvergence {
        what: "bracketed root",
        iterations: cfg.max_iter,
    })
}

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One G7/K15 pair on [a, b]; returns (kronrod estimate, |kronrod - gauss|).
fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let sum = f(center - dx) + f(center + dx);
        kronrod += w * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

const MAX_BISECTION_DEPTH: u32 = 48;

fn adaptive_panel<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    depth: u32,
) -> Result<f64> {
    let (value, err) = gauss_kronrod_15(f, a, b);
    if !value.is_finite() {
        return Err(Error::NoConvergence {
            what: "tail quadrature (non-finite integrand)",
            iterations: depth as usize,
        });
    }
    if err <= rel_tol * value.abs() || err <= f64::MIN_POSITIVE {
        return Ok(value);
    }
    if depth >= MAX_BISECTION_DEPTH {
        return Err(Error::NoConvergence {
            what: "tail quadrature panel",
            iterations: depth as usize,
        });
    }
    let m = 0.5 * (a + b);
    Ok(adaptive_panel(f, a, m, rel_tol, depth + 1)? + adaptive_panel(f, m, b, rel_tol, depth + 1)?)
}

const MAX_TAIL_PANELS: usize = 1000;
const MIN_TAIL_PANELS: usize = 4;

/// Computes `∫_lower^∞ g(t) dt` for nonnegative `g = O(t^-alpha)`, `alpha > 1`.
///
/// With `u = 1/t` the integral becomes `∫_0^{1/lower} g(1/u) u^-2 du`, whose
/// integrand behaves like `u^(alpha-2)` near zero. The interval is cut into
/// dyadic panels `[h/2, h]` marching toward zero; each panel is integrated by
/// adaptive Gauss-Kronrod. The unvisited remainder `[0, h/2]` is extrapolated
/// from the last panel with the geometric ratio `2^(1-alpha)`, and the march
/// stops once two successive extrapolated totals agree to `rel_tol`.
pub fn integrate_tail<G>(g: G, lower: f64, alpha: f64, cfg: &SolverConfig) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    if !(alpha > 1.0) {
        return Err(Error::Divergent { alpha });
    }
    if !(lower > 0.0 && lower.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tail integral lower limit must be positive and finite, got {lower}"
        )));
    }

    let integrand = |u: f64| {
        let t = 1.0 / u;
        let v = g(t);
        if v == 0.0 {
            0.0
        } else {
            v * t * t
        }
    };
    // Panels are individually held to a tighter tolerance than the total.
    let panel_tol = (0.01 * cfg.rel_tol).max(4.0 * f64::EPSILON);

    let ratio = 2f64.powf(1.0 - alpha);
    let tail_factor = ratio / (1.0 - ratio);

    let mut sum = 0.0;
    let mut previous: Option<f64> = None;
    let mut hi = 1.0 / lower;
    for panel in 0..MAX_TAIL_PANELS {
        let lo = 0.5 * hi;
        let piece = adaptive_panel(&integrand, lo, hi, panel_tol, 0)?;
        sum += piece;
        let estimate = sum + piece * tail_factor;
        if let Some(prev) = previous {
            if panel + 1 >= MIN_TAIL_PANELS
                && (estimate - prev).abs() <= cfg.rel_tol * estimate.abs()
            {
                return Ok(estimate);
            }
        }
        previous = Some(estimate);
        hi = lo;
        if hi == 0.0 {
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "tail quadrature",
        iterations: MAX_TAIL_PANELS,
    })
}

/// Minimizes `obj` over the grid `{k / m : k ∈ ℕ^n, Σk = m}` with
/// `m = round(1 / resolution)`. Points are visited in ascending lexicographic
/// order and only strict improvements replace the incumbent, so ties resolve
/// to the lexicographically smallest point.
pub fn minimize_on_simplex_grid<F>(obj: F, n: usize, resolution: f64) -> Result<Allocation>
where
    F: Fn(&[f64]) -> f64,
{
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "simplex grid resolution must lie in (0, 0.5], got {resolution}"
        )));
    }
    let m = (1.0 / resolution).round() as usize;
    let scale = m as f64;

    let mut counts = vec![0usize; n];
    counts[n - 1] = m;
    let mut point = vec![0.0; n];
    let mut best_value = f64::INFINITY;
    let mut best_point = vec![0.0; n];

    loop {
        for (p, &k) in point.iter_mut().zip(&counts) {
            *p = k as f64 / scale;
        }
        let value = obj(&point);
        if value < best_value {
            best_value = value;
            best_point.copy_from_slice(&point);
        }

        // Advance to the lexicographic successor: bump the rightmost
        // position (excluding the last) whose suffix still holds units.
        let mut suffix = counts[n - 1];
        let mut pivot = None;
        for i in (0..n - 1).rev() {
            if suffix > 0 {
                pivot = Some(i);
                break;
            }
            suffix += counts[i];
        }
        let Some(i) = pivot else { break };
        counts[i] += 1;
        let used: usize = counts[..=i].iter().sum();
        for c in counts[i + 1..].iter_mut() {
            *c = 0;
        }
        counts[n - 1] = m - used;
    }

    Allocation::new(best_point)
}

/// `count` points from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (llo, lhi) = (lo.ln(), hi.ln());
            let step = (lhi - llo) / (count - 1) as f64;
            (0..count)
                .map(|k| {
                    if k + 1 == count {
                        hi
                    } else {
                        (llo + step * k as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// `count` points from `lo` to `hi` inclusive, evenly spaced.
pub fn lin_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|k| {
                    if k + 1 == count {
                        hi
                    } else {
                        lo + step * k as f64
                    }
                })
                .collect()
        }
    }
}
