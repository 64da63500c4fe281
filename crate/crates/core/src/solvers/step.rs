//! Step instances. Periodic step policies form the one-parameter family
//! `B = k (D - D̄)`, `k ∈ [0, 1]`, and the decentralized battery solves a
//! scalar revenue maximisation over `k`.

use rayon::prelude::*;

use super::{wel_vector, SolveError, SolveResult, StepCandidate};
use crate::demand::StepDemand;
use crate::feasible::{Layout, Policy};
use crate::prices::PriceFunction;

pub const DEFAULT_STEP_GRID: usize = 10_000;

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const GOLDEN_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Number of grid intervals on `[0, 1]`.
    pub grid: usize,
    /// Relative revenue tolerance defining the near-optimal set.
    pub tol_rev: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            grid: DEFAULT_STEP_GRID,
            tol_rev: 1e-9,
        }
    }
}

/// Revenue of `B = k (D - D̄)`, written as `t1 B1 (P(N1) - P(N2))` using
/// periodicity.
pub fn step_revenue(step: &StepDemand, price: &PriceFunction, k: f64) -> Result<f64, SolveError> {
    let avg = step.average();
    let b1 = k * (step.d1 - avg);
    let b2 = k * (step.d2 - avg);
    let p1 = price.price(step.d1 - b1)?;
    let p2 = price.price(step.d2 - b2)?;
    Ok(step.t1 * b1 * (p1 - p2))
}

fn step_wel(step: &StepDemand, price: &PriceFunction, k: f64) -> Result<f64, SolveError> {
    let layout = Layout::of(&(*step).into());
    let avg = step.average();
    let b = [k * (step.d1 - avg), k * (step.d2 - avg)];
    wel_vector(&layout, &b, price)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Maximises revenue over `k` on a dense grid, refines every local maximum by
/// golden-section search, and collects all points within `tol_rev` of the
/// best revenue.
pub fn solve_dcb_step(step: &StepDemand, price: &PriceFunction, opts: &StepOptions) -> Result<SolveResult, SolveError> {
    let m = opts.grid.max(2);
    if !(opts.tol_rev >= 0.0) {
        return Err(SolveError::Parameter(format!(
            "tol_rev must be >= 0, got {}",
            opts.tol_rev
        )));
    }
    let ks: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let revs: Vec<f64> = ks
        .par_iter()
        .map(|&k| step_revenue(step, price, k))
        .collect::<Result<_, _>>()?;

    let rev_at = |k: f64| step_revenue(step, price, k).unwrap_or(f64::NEG_INFINITY);
    let mut points: Vec<(f64, f64)> = ks.iter().copied().zip(revs.iter().copied()).collect();
    let peaks: Vec<usize> = (0..=m)
        .filter(|&i| {
            let left = i == 0 || revs[i] > revs[i - 1];
            let right = i == m || revs[i] >= revs[i + 1];
            left && right
        })
        .collect();
    let refined: Vec<(f64, f64)> = peaks
        .par_iter()
        .map(|&i| {
            let a = ks[i.saturating_sub(1)];
            let b = ks[(i + 1).min(m)];
            let (k, r) = golden_max(rev_at, a, b);
            if r >= revs[i] {
                (k, r)
            } else {
                (ks[i], revs[i])
            }
        })
        .collect();
    points.extend(refined.iter().copied());

    let (k_best, r_best) = points
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc });
    let cutoff = r_best - opts.tol_rev * r_best.abs().max(1e-12);
    let mut near: Vec<(f64, f64)> = points.into_iter().filter(|p| p.1 >= cutoff).collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0));
    near.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
    let near_optimal_set = near
        .into_iter()
        .map(|(k, rev)| {
            Ok(StepCandidate {
                k,
                rev,
                wel: step_wel(step, price, k)?,
            })
        })
        .collect::<Result<Vec<_>, SolveError>>()?;

    Ok(SolveResult {
        policy: Policy::ScalarK { k: k_best },
        wel: step_wel(step, price, k_best)?,
        rev: r_best,
        certificate_residual: None,
        near_optimal_set,
        converged: true,
        iterations: m + 1,
    })
}

/// Revenue-optimal `k` for `P(z) = α z²` on the `(x, ε)` step instance,
/// `(2(1-εx) - √S) / (3(1-x-εx))` with `S = (ε²+3)x² - 2εx + 1`, in the
/// rationalised form `(1+x-εx) / (2(1-εx) + √S)`, which is regular on the
/// line `ε = (1-x)/x` where it equals 1/2.
pub fn k_star_quadratic(x: f64, eps: f64) -> Result<f64, SolveError> {
    if !(x > 0.0 && x < 1.0) {
        return Err(SolveError::Parameter(format!("x must lie in (0, 1), got {x}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(SolveError::Parameter(format!("eps must lie in (0, 1], got {eps}")));
    }
    let ex = eps * x;
    let s = (eps * eps + 3.0) * x * x - 2.0 * ex + 1.0;
    Ok((1.0 + x - ex) / (2.0 * (1.0 - ex) + s.sqrt()))
}

/// Lower bound `k̲` on the revenue-optimal `k` for `P(z) = α z^d`,
/// `(2 + d(1-x) - √(d²(1-x)² + 4x)) / (2(d+1)(1-x))`, evaluated as
/// `2 / (2 + d(1-x) + √(d²(1-x)² + 4x))`.
pub fn k_lower_bound(x: f64, d: u32) -> Result<f64, SolveError> {
    if !(x > 0.0 && x < 1.0) {
        return Err(SolveError::Parameter(format!("x must lie in (0, 1), got {x}")));
    }
    if d == 0 {
        return Err(SolveError::Parameter("d must be >= 1".into()));
    }
    let a = f64::from(d) * (1.0 - x);
    Ok(2.0 / (2.0 + a + (a * a + 4.0 * x).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::Demand;
    use crate::feasible::{FeasibleSet, ProjectOptions};
    use crate::solvers::{rev, solve_dcb_linear, wel};
    use proptest::prelude::*;

    fn paper_k_star(x: f64, eps: f64) -> f64 {
        let s = (eps * eps + 3.0) * x * x - 2.0 * eps * x + 1.0;
        (2.0 * (1.0 - eps * x) - s.sqrt()) / (3.0 * (1.0 - x - eps * x))
    }

    fn quad() -> PriceFunction {
        PriceFunction::monomial(3.0, 2).unwrap()
    }

    #[test]
    fn quadratic_grid_matches_closed_form() {
        let s = StepDemand::from_params(0.5, 0.5).unwrap();
        let r = solve_dcb_step(&s, &quad(), &StepOptions::default()).unwrap();
        let Policy::ScalarK { k } = r.policy else { panic!() };
        let closed = k_star_quadratic(0.5, 0.5).unwrap();
        assert!((k - closed).abs() < 1e-6);
        assert!((closed - 0.47248).abs() < 1e-5);
        assert!((closed - paper_k_star(0.5, 0.5)).abs() < 1e-14);
    }

    #[test]
    fn stored_values_match_recomputation() {
        let s = StepDemand::from_params(0.3, 0.8).unwrap();
        let p = PriceFunction::counterexample(0.05).unwrap();
        let r = solve_dcb_step(&s, &p, &StepOptions::default()).unwrap();
        let d: Demand = s.into();
        assert!((wel(&r.policy, &d, &p).unwrap() - r.wel).abs() < 1e-10);
        assert!((rev(&r.policy, &d, &p).unwrap() - r.rev).abs() < 1e-10);
        assert!(r.near_optimal_set.iter().any(|c| c.rev == r.rev));
    }

    #[test]
    fn counterexample_argmax() {
        let delta = 0.1;
        let s = StepDemand::new(1.0, 0.0, 0.5).unwrap();
        let p = PriceFunction::counterexample(delta).unwrap();
        let r = solve_dcb_step(&s, &p, &StepOptions::default()).unwrap();
        let Policy::ScalarK { k } = r.policy else { panic!() };
        // B1 = k/2 is the x of the reduced problem
        assert!((k / 2.0 - (delta - delta * delta)).abs() < 1e-4);
        assert!((r.rev - 0.405).abs() < 1e-9);
    }

    #[test]
    fn linear_price_halves() {
        for &(x, eps) in &[(0.2, 0.3), (0.5, 1.0), (0.9, 0.1), (0.05, 0.95)] {
            let s = StepDemand::from_params(x, eps).unwrap();
            let p = PriceFunction::linear(1.3, 0.2).unwrap();
            let r = solve_dcb_step(&s, &p, &StepOptions::default()).unwrap();
            let Policy::ScalarK { k } = r.policy else { panic!() };
            assert!((k - 0.5).abs() < 1e-6);
            // same answer as projecting D/2 on the two-interval layout
            let d: Demand = s.into();
            let lin = solve_dcb_linear(&d, &p, &FeasibleSet::default(), &ProjectOptions::default()).unwrap();
            let bl = lin.policy.to_vector(&d).unwrap();
            let bs = r.policy.to_vector(&d).unwrap();
            assert!((bl[0] - bs[0]).abs() < 1e-6 && (bl[1] - bs[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn k_star_limits() {
        assert!((k_star_quadratic(0.5, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((k_star_quadratic(1e-9, 1e-9).unwrap() - 1.0 / 3.0).abs() < 1e-6);
        assert!((k_star_quadratic(1.0 - 1e-12, 1.0).unwrap() - 3f64.sqrt() / 3.0).abs() < 1e-6);
        assert!(k_star_quadratic(0.0, 0.5).is_err());
        assert!(k_star_quadratic(0.5, 0.0).is_err());
    }

    #[test]
    fn k_lower_bound_examples() {
        for i in 1..100 {
            let x = i as f64 / 100.0;
            assert!((k_lower_bound(x, 1).unwrap() - 0.5).abs() < 1e-15);
            for d in 1..=8 {
                let k = k_lower_bound(x, d).unwrap();
                let r = k * (1.0 - x);
                assert!(r > 0.0 && r < 1.0 / f64::from(d + 1));
                // the proof's quadratic root, literal form
                let a = f64::from(d) * (1.0 - x);
                let lit = (2.0 + a - (a * a + 4.0 * x).sqrt()) / (2.0 * f64::from(d + 1) * (1.0 - x));
                assert!((k - lit).abs() < 1e-12);
            }
        }
        assert!(k_lower_bound(0.5, 0).is_err());
    }

    #[test]
    fn constant_demand_has_zero_revenue() {
        let s = StepDemand::new(0.4, 0.4, 0.5).unwrap();
        let r = solve_dcb_step(&s, &quad(), &StepOptions::default()).unwrap();
        assert_eq!(r.rev, 0.0);
        assert_eq!(r.wel, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn quadratic_optimality_identity(x in 1e-4..(1.0 - 1e-4), eps in 1e-4..=1.0f64) {
            let k = k_star_quadratic(x, eps).unwrap();
            let lhs = x * (3.0 * k * k - 1.0);
            let rhs = (1.0 - eps * x) * (3.0 * k * k - 4.0 * k + 1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-9);
        }

        #[test]
        fn rationalised_form_equals_paper_form(x in 0.01..0.99f64, eps in 0.01..=1.0f64) {
            prop_assume!((1.0 - x - eps * x).abs() > 1e-3);
            let k = k_star_quadratic(x, eps).unwrap();
            prop_assert!((k - paper_k_star(x, eps)).abs() <= 1e-9);
        }
    }
}
