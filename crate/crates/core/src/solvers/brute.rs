//! Exhaustive lattice search, for cross-checking the solvers on tiny instances.

use super::{rev_vector, wel_vector, Objective, SolveError, SolveResult};
use crate::demand::Demand;
use crate::feasible::{FeasibleSet, Layout, Policy};
use crate::prices::PriceFunction;

const MAX_LATTICE_POINTS: u128 = 50_000_000;
const MAX_GRID: usize = 4;

/// Best lattice policy for `objective`. The free coordinates are all nodes but
/// the last, stepped by `1/lattice_res` across their box; the last node is
/// fixed by periodicity. Supports grids with `n <= 4` and step demands.
pub fn brute_force_policy(
    demand: &Demand,
    price: &PriceFunction,
    set: &FeasibleSet,
    lattice_res: usize,
    objective: Objective,
) -> Result<SolveResult, SolveError> {
    match demand {
        Demand::Path(p) if p.values().len() <= MAX_GRID => {}
        Demand::Step(_) => {}
        _ => {
            return Err(SolveError::Unsupported(format!(
                "lattice search needs a grid with n <= {MAX_GRID} or a step demand"
            )))
        }
    }
    if lattice_res == 0 {
        return Err(SolveError::Parameter("lattice_res must be positive".into()));
    }
    set.admits_zero(demand)?;
    let layout = Layout::of(demand);
    let bounds = set.net_bounds(demand);
    let (lower, upper) = set.policy_bounds(&layout, bounds.0, bounds.1);
    let free = layout.len() - 1;
    let h = 1.0 / lattice_res as f64;
    // lattice anchored at zero so the do-nothing policy is always a candidate
    let axes: Vec<Vec<f64>> = (0..free)
        .map(|i| {
            let lo = (lower[i] / h).ceil() as i64;
            let hi = (upper[i] / h).floor() as i64;
            (lo..=hi).map(|j| j as f64 * h).collect()
        })
        .collect();
    let points: u128 = axes.iter().map(|a| a.len() as u128).product();
    if points > MAX_LATTICE_POINTS {
        return Err(SolveError::TooLarge { points });
    }

    let last = free;
    let score = |b: &[f64]| -> Result<f64, SolveError> {
        match objective {
            Objective::Wel => wel_vector(&layout, b, price),
            Objective::Rev => rev_vector(&layout, b, price),
        }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; free];
    let mut b = vec![0.0; layout.len()];
    'outer: loop {
        let mut acc = 0.0;
        for i in 0..free {
            b[i] = axes[i][idx[i]];
            acc += layout.dt[i] * b[i];
        }
        b[last] = -acc / layout.dt[last];
        let admissible = crate::feasible::check_vector(&layout, set, bounds, &b, 1e-12).feasible;
        if admissible {
            let s = score(&b)?;
            if best.as_ref().map_or(true, |(v, _)| s > *v) {
                best = Some((s, b.clone()));
            }
        }
        for i in 0..free {
            idx[i] += 1;
            if idx[i] < axes[i].len() {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    let (_, b) = best.expect("the zero policy lies on the lattice");
    Ok(SolveResult {
        wel: wel_vector(&layout, &b, price)?,
        rev: rev_vector(&layout, &b, price)?,
        policy: Policy::from_vector(demand, b),
        certificate_residual: None,
        near_optimal_set: Vec::new(),
        converged: true,
        iterations: points as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{DemandPath, StepDemand, TimeGrid};
    use crate::feasible::ProjectOptions;
    use crate::solvers::{solve_cb_linear, solve_dcb_step, StepOptions};

    #[test]
    fn reproduces_linear_cb_on_three_nodes() {
        let d: Demand = DemandPath::unit(vec![0.9, 0.2, 0.4]).unwrap().into();
        let p = PriceFunction::linear(1.0, 0.0).unwrap();
        let set = FeasibleSet::default();
        let bf = brute_force_policy(&d, &p, &set, 200, Objective::Wel).unwrap();
        let cb = solve_cb_linear(&d, &p, &set, &ProjectOptions::default()).unwrap();
        assert!((bf.wel - cb.wel).abs() < 2e-2);
        assert!(bf.wel <= cb.wel + 1e-12);
    }

    #[test]
    fn reproduces_step_optimum() {
        let s = StepDemand::from_params(0.4, 0.6).unwrap();
        let p = PriceFunction::monomial(3.0, 2).unwrap();
        let res = 400;
        let bf = brute_force_policy(&s.into(), &p, &FeasibleSet::default(), res, Objective::Rev).unwrap();
        let st = solve_dcb_step(&s, &p, &StepOptions::default()).unwrap();
        let b_bf = bf.policy.to_vector(&s.into()).unwrap()[0];
        let b_st = st.policy.to_vector(&s.into()).unwrap()[0];
        assert!((b_bf - b_st).abs() <= 1.0 / res as f64);
    }

    #[test]
    fn constant_demand_gives_zero() {
        let d: Demand = DemandPath::constant(TimeGrid::new(3).unwrap(), 0.5).unwrap().into();
        let p = PriceFunction::linear(1.0, 0.0).unwrap();
        let bf = brute_force_policy(&d, &p, &FeasibleSet::default(), 50, Objective::Wel).unwrap();
        assert!(bf.policy.to_vector(&d).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_large_grids() {
        let d: Demand = DemandPath::constant(TimeGrid::new(5).unwrap(), 0.5).unwrap().into();
        let p = PriceFunction::linear(1.0, 0.0).unwrap();
        assert!(brute_force_policy(&d, &p, &FeasibleSet::default(), 10, Objective::Wel).is_err());
    }
}
