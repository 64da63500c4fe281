//! Weighted projection onto the admissible set by Dykstra's algorithm.
//!
//! The inner product is `⟨x, y⟩ = Σ p dt x y`. Component sets are one slab
//! per ramp pair, one slab per capacity window, and the per-node box (box and
//! power merged) intersected with the periodicity subspace. That last set is
//! projected exactly and goes last in each sweep, so every returned iterate
//! lies in the box and satisfies periodicity to rounding.

use serde::Serialize;

use super::{check_vector, FeasibilityReport, FeasibleError, FeasibleSet, Layout, Policy};
use crate::demand::Demand;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectOptions {
    /// Stop once no component projection in a sweep moves the iterate by this much.
    pub tol: f64,
    /// Sweep cap; defaults to 50 times the number of component sets.
    pub max_iter: Option<usize>,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        ProjectOptions {
            tol: 1e-9,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub point: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest single move in the final sweep.
    pub movement: f64,
}

/// `|a·x| <= bound` with `a` supported on `idx`.
#[derive(Debug, Clone)]
struct Slab {
    idx: Vec<usize>,
    coef: Vec<f64>,
    /// `coef / w`, the W-metric normal.
    step: Vec<f64>,
    step_max: f64,
    /// `aᵀ W⁻¹ a`
    den: f64,
    bound: f64,
}

impl Slab {
    fn new(idx: Vec<usize>, coef: Vec<f64>, w: &[f64], bound: f64) -> Self {
        let step: Vec<f64> = idx.iter().zip(&coef).map(|(&i, c)| c / w[i]).collect();
        let den = coef.iter().zip(&step).map(|(c, s)| c * s).sum();
        let step_max = step.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        Slab {
            idx,
            coef,
            step,
            step_max,
            den,
            bound,
        }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).map(|(&i, c)| c * x[i]).sum()
    }
}

/// Exact W-projection onto the box intersected with per-path periodicity.
///
/// Lagrange multipliers `λ_ℓ`, one per leaf path, give
/// `x_v = clamp(y_v - Λ_v / p_v)` with `Λ_v` the sum of `λ_ℓ` over leaves
/// below `v`. Each path sum is a nonincreasing piecewise-linear function of
/// its own multiplier, so a coordinate update solves it exactly from its
/// breakpoints. A chain needs one update; trees sweep until the path sums
/// vanish. Multipliers are kept between calls as a warm start.
#[derive(Debug, Clone)]
struct BoxPeriodic {
    paths: Vec<Vec<usize>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    inv_p: Vec<f64>,
    lambda: Vec<f64>,
    big_lambda: Vec<f64>,
    scratch: Vec<(f64, f64)>,
}

const INNER_TOL: f64 = 1e-15;
const INNER_SWEEPS: usize = 100_000;

impl BoxPeriodic {
    fn new(layout: &Layout, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let paths = layout.leaves.iter().map(|&l| layout.path_to(l)).collect();
        BoxPeriodic {
            paths,
            lower,
            upper,
            inv_p: layout.prob.iter().map(|p| 1.0 / p).collect(),
            lambda: vec![0.0; layout.leaves.len()],
            big_lambda: vec![0.0; layout.len()],
            scratch: Vec::new(),
        }
    }

    /// Root of the path sum in this leaf's multiplier. The sum is
    /// `Σ dt clamp(y - (other + λ)/p)`: flat at the upper bounds for small `λ`,
    /// then piecewise linear, so one sorted sweep over the breakpoints finds it.
    fn solve_leaf(&mut self, layout: &Layout, leaf: usize, y: &[f64]) -> f64 {
        let path = std::mem::take(&mut self.paths[leaf]);
        let own = self.lambda[leaf];
        self.scratch.clear();
        let mut f = 0.0;
        for &v in &path {
            let other = self.big_lambda[v] - own;
            let p = 1.0 / self.inv_p[v];
            let rate = layout.dt[v] * self.inv_p[v];
            // x_v leaves its upper bound, then reaches its lower bound
            self.scratch.push(((y[v] - self.upper[v]) * p - other, -rate));
            self.scratch.push(((y[v] - self.lower[v]) * p - other, rate));
            f += layout.dt[v] * self.upper[v];
        }
        self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.paths[leaf] = path;

        let bps = &self.scratch;
        let mut slope = 0.0;
        let mut at = bps[0].0;
        for &(lam, ds) in bps {
            let next = f + slope * (lam - at);
            if next <= 0.0 {
                // the root lies in [at, lam]; slope < 0 here since f > 0
                return if slope < 0.0 { at - f / slope } else { at };
            }
            f = next;
            at = lam;
            slope += ds;
        }
        at
    }

    fn apply(&mut self, layout: &Layout, y: &[f64], out: &mut [f64]) {
        let leaves = self.paths.len();
        for sweep in 0..INNER_SWEEPS {
            let mut change = 0.0_f64;
            for leaf in 0..leaves {
                let new = self.solve_leaf(layout, leaf, y);
                let d = new - self.lambda[leaf];
                if d != 0.0 {
                    for &v in &self.paths[leaf] {
                        self.big_lambda[v] += d;
                    }
                    self.lambda[leaf] = new;
                }
                change = change.max(d.abs());
            }
            if leaves == 1
                || (sweep > 0 && change <= INNER_TOL * (1.0 + self.lambda.iter().fold(0.0_f64, |m, l| m.max(l.abs()))))
            {
                break;
            }
        }
        for v in 0..layout.len() {
            out[v] = (y[v] - self.big_lambda[v] * self.inv_p[v]).clamp(self.lower[v], self.upper[v]);
        }
    }
}

/// Projects node values `y` onto the set. Errors only on bad parameters or an
/// empty set; non-convergence is reported in the result.
pub fn project_vector(
    layout: &Layout,
    set: &FeasibleSet,
    bounds: (f64, f64),
    y: &[f64],
    opts: &ProjectOptions,
) -> Result<Projection, FeasibleError> {
    set.check_params()?;
    let n = layout.len();
    if y.len() != n {
        return Err(FeasibleError::Length { got: y.len(), want: n });
    }
    let w = layout.weights();
    let (lower, upper) = set.policy_bounds(layout, bounds.0, bounds.1);
    if let Some(node) = (0..n).find(|&i| lower[i] > upper[i] + 1e-12 || lower[i] > 0.0 || upper[i] < 0.0) {
        return Err(FeasibleError::ZeroInfeasible {
            node,
            value: layout.demand[node],
            lo: bounds.0,
            hi: bounds.1,
        });
    }

    let mut slabs = Vec::new();
    for c in 0..n {
        if let Some(p) = layout.parent[c] {
            if let Some(bound) = set.ramp_bound(layout, p, c) {
                slabs.push(Slab::new(vec![p, c], vec![-1.0, 1.0], &w, bound));
            }
        }
    }
    if let Some(cap) = set.capacity {
        for (top, bottom) in layout.segments() {
            let idx = layout.segment_nodes(top, bottom);
            let coef = idx.iter().map(|&i| layout.dt[i]).collect();
            slabs.push(Slab::new(idx, coef, &w, cap));
        }
    }
    let mut boxed = BoxPeriodic::new(layout, lower, upper);

    let sets = n + layout.leaves.len() + slabs.len();
    let max_iter = opts.max_iter.unwrap_or(50 * sets).max(1);

    let mut x = y.to_vec();
    let mut box_corr = vec![0.0; n];
    let mut theta = vec![0.0; slabs.len()];
    let mut z = vec![0.0; n];
    let mut movement = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut moved = 0.0_f64;
        for (s, th) in slabs.iter().zip(theta.iter_mut()) {
            let v = s.dot(&x) + *th * s.den;
            let new = (v - v.clamp(-s.bound, s.bound)) / s.den;
            let d = *th - new;
            if d != 0.0 {
                for (&i, st) in s.idx.iter().zip(&s.step) {
                    x[i] += d * st;
                }
                moved = moved.max(d.abs() * s.step_max);
            }
            *th = new;
        }
        for i in 0..n {
            z[i] = x[i] + box_corr[i];
        }
        let prev = x.clone();
        boxed.apply(layout, &z, &mut x);
        for i in 0..n {
            box_corr[i] = z[i] - x[i];
            moved = moved.max((x[i] - prev[i]).abs());
        }
        movement = moved;
        if moved < opts.tol || slabs.is_empty() {
            return Ok(Projection {
                point: x,
                converged: true,
                iterations,
                movement,
            });
        }
    }
    Ok(Projection {
        point: x,
        converged: false,
        iterations,
        movement,
    })
}

/// Projection of a policy-shaped point onto the admissible set for `demand`.
pub fn project(
    point: &Policy,
    demand: &Demand,
    set: &FeasibleSet,
    opts: &ProjectOptions,
) -> Result<(Policy, Projection), FeasibleError> {
    let y = point.to_vector(demand)?;
    let layout = Layout::of(demand);
    let proj = project_vector(&layout, set, set.net_bounds(demand), &y, opts)?;
    Ok((Policy::from_vector(demand, proj.point.clone()), proj))
}

impl Projection {
    pub fn report(&self, layout: &Layout, set: &FeasibleSet, bounds: (f64, f64), tol: f64) -> FeasibilityReport {
        check_vector(layout, set, bounds, &self.point, tol)
    }
}
