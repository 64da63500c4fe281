//! Linear prices. With `P(z) = a z + b`, `WEL = ½a(2⟨D,B⟩ - ‖B‖²)` and
//! `REV = a(⟨D,B⟩ - ‖B‖²)` on periodic policies, so the centralized optimum is
//! the projection of `D` and the decentralized one the projection of `D/2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rev_vector, wel_vector, Battery, SolveError, SolveResult};
use crate::demand::Demand;
use crate::feasible::{project_vector, FeasibleSet, Layout, Policy, ProjectOptions};
use crate::prices::PriceFunction;

fn require_linear(op: &'static str, price: &PriceFunction) -> Result<(), SolveError> {
    if price.is_linear() {
        Ok(())
    } else {
        Err(SolveError::NotLinear(op, price.kind()))
    }
}

fn solve_projection(
    demand: &Demand,
    price: &PriceFunction,
    set: &FeasibleSet,
    scale: f64,
    opts: &ProjectOptions,
) -> Result<SolveResult, SolveError> {
    set.admits_zero(demand)?;
    let layout = Layout::of(demand);
    let target: Vec<f64> = layout.demand.iter().map(|d| scale * d).collect();
    let proj = project_vector(&layout, set, set.net_bounds(demand), &target, opts)?;
    Ok(SolveResult {
        wel: wel_vector(&layout, &proj.point, price)?,
        rev: rev_vector(&layout, &proj.point, price)?,
        policy: Policy::from_vector(demand, proj.point),
        certificate_residual: None,
        near_optimal_set: Vec::new(),
        converged: proj.converged,
        iterations: proj.iterations,
    })
}

/// Centralized optimum for a linear price: the projection of `D`.
pub fn solve_cb_linear(
    demand: &Demand,
    price: &PriceFunction,
    set: &FeasibleSet,
    opts: &ProjectOptions,
) -> Result<SolveResult, SolveError> {
    require_linear("solve_cb_linear", price)?;
    solve_projection(demand, price, set, 1.0, opts)
}

/// Decentralized optimum for a linear price: the projection of `D/2`. The
/// revenue is strictly concave, so the optimum is unique.
pub fn solve_dcb_linear(
    demand: &Demand,
    price: &PriceFunction,
    set: &FeasibleSet,
    opts: &ProjectOptions,
) -> Result<SolveResult, SolveError> {
    require_linear("solve_dcb_linear", price)?;
    solve_projection(demand, price, set, 0.5, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateOptions {
    /// Random feasible probes, each a projection of a random point.
    pub probes: usize,
    pub seed: u64,
    /// Extra feasible policies to probe, e.g. the other battery's optimum.
    pub extra: Vec<Policy>,
    pub project: ProjectOptions,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            probes: 256,
            seed: 42,
            extra: Vec::new(),
            project: ProjectOptions::default(),
        }
    }
}

/// Largest `⟨∇f(B*), B - B*⟩` over probe policies `B`, with `∇f = 2(D - B*)`
/// for the centralized and `D - 2B*` for the decentralized objective. The
/// zero policy is always probed. A value `<= tol` means no probe falsifies
/// first-order optimality.
pub fn certificate_linear(
    result: &SolveResult,
    demand: &Demand,
    set: &FeasibleSet,
    which: Battery,
    opts: &CertificateOptions,
) -> Result<f64, SolveError> {
    let layout = Layout::of(demand);
    let bounds = set.net_bounds(demand);
    let star = result.policy.to_vector(demand)?;
    let grad: Vec<f64> = layout
        .demand
        .iter()
        .zip(&star)
        .map(|(d, b)| match which {
            Battery::Cb => 2.0 * (d - b),
            Battery::Dcb => d - 2.0 * b,
        })
        .collect();
    let residual = |probe: &[f64]| -> f64 {
        let dir: Vec<f64> = probe.iter().zip(&star).map(|(p, s)| p - s).collect();
        layout.inner(&grad, &dir)
    };

    let mut worst = residual(&vec![0.0; layout.len()]);
    for p in &opts.extra {
        worst = worst.max(residual(&p.to_vector(demand)?));
    }
    let (lo, hi) = bounds;
    let span = (hi - lo).max(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.probes {
        // vary the scale so probes land both inside and on the boundary
        let scale = span * rng.random_range(0.05..1.5);
        let y: Vec<f64> = (0..layout.len()).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let proj = project_vector(&layout, set, bounds, &y, &opts.project)?;
        worst = worst.max(residual(&proj.point));
    }
    Ok(worst)
}

/// `B = D - D̄`, the centralized optimum when only the net-demand box binds.
pub fn solve_cb_averaging(
    demand: &Demand,
    price: &PriceFunction,
    set: &FeasibleSet,
) -> Result<SolveResult, SolveError> {
    if !demand.is_deterministic() {
        return Err(SolveError::NotDeterministic("solve_cb_averaging"));
    }
    if set.has_structural() {
        return Err(SolveError::Unsupported(
            "averaging ignores power, capacity and ramp limits".into(),
        ));
    }
    let layout = Layout::of(demand);
    let avg = layout.integral(&layout.demand);
    let (lo, hi) = set.net_bounds(demand);
    if avg < lo - 1e-12 || avg > hi + 1e-12 {
        return Err(SolveError::AverageOutsideBox { level: avg, lo, hi });
    }
    let b: Vec<f64> = layout.demand.iter().map(|d| d - avg).collect();
    let policy = match demand {
        Demand::Step(_) => Policy::ScalarK { k: 1.0 },
        _ => Policy::from_vector(demand, b.clone()),
    };
    Ok(SolveResult {
        wel: wel_vector(&layout, &b, price)?,
        rev: rev_vector(&layout, &b, price)?,
        policy,
        certificate_residual: None,
        near_optimal_set: Vec::new(),
        converged: true,
        iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{example2_path, DemandPath, StepDemand, TimeGrid};
    use crate::feasible::check;
    use proptest::prelude::*;

    fn lin() -> PriceFunction {
        PriceFunction::linear(1.0, 0.0).unwrap()
    }

    #[test]
    fn step_cb_is_balancing() {
        let s = StepDemand::from_params(0.4, 0.7).unwrap();
        let d: Demand = s.into();
        let r = solve_cb_linear(&d, &lin(), &FeasibleSet::default(), &ProjectOptions::default()).unwrap();
        let b = r.policy.to_vector(&d).unwrap();
        assert!((b[0] - (s.d1 - 0.4)).abs() < 1e-12);
        assert!((b[1] - (s.d2 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn constant_demand_gives_zero() {
        let d: Demand = DemandPath::constant(TimeGrid::new(10).unwrap(), 0.3).unwrap().into();
        for r in [
            solve_cb_linear(&d, &lin(), &FeasibleSet::default(), &ProjectOptions::default()).unwrap(),
            solve_dcb_linear(&d, &lin(), &FeasibleSet::default(), &ProjectOptions::default()).unwrap(),
            solve_cb_averaging(&d, &lin(), &FeasibleSet::default()).unwrap(),
        ] {
            assert!(r.policy.to_vector(&d).unwrap().iter().all(|v| v.abs() < 1e-12));
            assert!(r.wel.abs() < 1e-12);
        }
    }

    #[test]
    fn example2_dcb_is_half_sine() {
        let grid = TimeGrid::new(2000).unwrap();
        let d: Demand = example2_path(grid).into();
        let p = PriceFunction::linear(2.0, 0.0).unwrap();
        let r = solve_dcb_linear(&d, &p, &FeasibleSet::default(), &ProjectOptions::default()).unwrap();
        let b = r.policy.to_vector(&d).unwrap();
        for (t, v) in grid.times().iter().zip(&b) {
            assert!((v - 0.5 * (2.0 * std::f64::consts::PI * t).sin()).abs() < 1e-3);
        }
        assert!((r.wel - 0.375).abs() < 1e-3);
    }

    #[test]
    fn certificates_on_unconstrained_step() {
        let d: Demand = StepDemand::from_params(0.5, 0.5).unwrap().into();
        let set = FeasibleSet::default();
        let opts = ProjectOptions::default();
        let cb = solve_cb_linear(&d, &lin(), &set, &opts).unwrap();
        let dcb = solve_dcb_linear(&d, &lin(), &set, &opts).unwrap();
        let cert = CertificateOptions {
            extra: vec![cb.policy.clone()],
            ..Default::default()
        };
        assert!(certificate_linear(&dcb, &d, &set, Battery::Dcb, &cert).unwrap() <= 1e-8);
        assert!(certificate_linear(&cb, &d, &set, Battery::Cb, &CertificateOptions::default()).unwrap() <= 1e-8);

        // B = 0 in the DCB inequality: ⟨D, B_DCB⟩ >= 2‖B_DCB‖²
        let l = Layout::of(&d);
        let bd = dcb.policy.to_vector(&d).unwrap();
        let bc = cb.policy.to_vector(&d).unwrap();
        assert!(l.inner(&l.demand, &bd) >= 2.0 * l.inner(&bd, &bd) - 1e-12);
        // B = B_CB: ⟨D - 2B_DCB, B_CB - B_DCB⟩ <= 0
        let g: Vec<f64> = l.demand.iter().zip(&bd).map(|(d, b)| d - 2.0 * b).collect();
        let dir: Vec<f64> = bc.iter().zip(&bd).map(|(c, b)| c - b).collect();
        assert!(l.inner(&g, &dir) <= 1e-12);
    }

    #[test]
    fn certificate_flags_a_wrong_answer() {
        let d: Demand = StepDemand::from_params(0.5, 0.5).unwrap().into();
        let set = FeasibleSet::default();
        let mut cb = solve_cb_linear(&d, &lin(), &set, &ProjectOptions::default()).unwrap();
        cb.policy = Policy::ScalarK { k: 0.5 };
        assert!(certificate_linear(&cb, &d, &set, Battery::Cb, &CertificateOptions::default()).unwrap() > 1e-3);
    }

    #[test]
    fn averaging_step_welfare() {
        for d in 1..=6u32 {
            let eps = 0.05;
            let dem: Demand = StepDemand::new(1.0, 0.0, eps).unwrap().into();
            let p = PriceFunction::monomial(f64::from(d + 1), d).unwrap();
            let r = solve_cb_averaging(&dem, &p, &FeasibleSet::default()).unwrap();
            assert!((r.wel - (eps - eps.powi(d as i32 + 1))).abs() < 1e-15);
        }
    }

    #[test]
    fn averaging_rejects_trees_and_structure() {
        let d: Demand = StepDemand::new(1.0, 0.0, 0.3).unwrap().into();
        let set = FeasibleSet {
            power: Some(0.1),
            ..Default::default()
        };
        assert!(solve_cb_averaging(&d, &lin(), &set).is_err());
        let tight = FeasibleSet::with_box(0.0, 0.2);
        assert!(matches!(
            solve_cb_averaging(&d, &lin(), &tight),
            Err(SolveError::AverageOutsideBox { .. }) | Err(SolveError::Feasible(_))
        ));
    }

    #[test]
    fn nonlinear_price_rejected() {
        let d: Demand = StepDemand::new(1.0, 0.0, 0.3).unwrap().into();
        let p = PriceFunction::monomial(1.0, 2).unwrap();
        assert!(matches!(
            solve_cb_linear(&d, &p, &FeasibleSet::default(), &ProjectOptions::default()),
            Err(SolveError::NotLinear(..))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cb_dominates_dcb(
            values in prop::collection::vec(0.0..1.0f64, 3..16),
            gamma in 0.0..0.5f64,
            cap in 0.0..0.2f64,
            a in 0.1..5.0f64,
            b in 0.0..2.0f64,
        ) {
            let d: Demand = DemandPath::unit(values).unwrap().into();
            let set = FeasibleSet { power: Some(gamma), capacity: Some(cap), ..Default::default() };
            let p = PriceFunction::linear(a, b).unwrap();
            let opts = ProjectOptions::default();
            let cb = solve_cb_linear(&d, &p, &set, &opts).unwrap();
            let dcb = solve_dcb_linear(&d, &p, &set, &opts).unwrap();
            prop_assert!(cb.wel >= -1e-12);
            prop_assert!(cb.wel >= dcb.wel - 1e-9);
            prop_assert!(check(&cb.policy, &d, &set, 1e-6).unwrap().feasible);
        }
    }
}
