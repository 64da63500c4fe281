//! Independent reference computations used to cross-check the solvers.

use rand::Rng;

use crate::demand::Demand;
use crate::feasible::{FeasibleError, FeasibleSet, Layout, Policy};

/// Outcome of [`augmented_lagrangian_projection`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub point: Vec<f64>,
    /// Largest path-sum violation.
    pub periodicity: f64,
    pub outer_iterations: usize,
}

/// Minimises `Σ p dt (x - y)²` over the per-node box of `set` (net box and
/// power) with every root-to-leaf path summing to zero. Equalities go into an
/// augmented Lagrangian; each inner problem is solved by accelerated
/// projected gradient, where the projection is a plain clamp. Ramp and
/// capacity limits are not supported.
pub fn augmented_lagrangian_projection(
    demand: &Demand,
    set: &FeasibleSet,
    y: &[f64],
) -> Result<OracleSolution, FeasibleError> {
    if set.capacity.is_some() || set.ramp.is_some() {
        return Err(FeasibleError::Parameter("oracle handles box and power only".into()));
    }
    set.admits_zero(demand)?;
    let layout = Layout::of(demand);
    let n = layout.len();
    let (lo, hi) = set.net_bounds(demand);
    let gamma = set.power.unwrap_or(f64::INFINITY);
    let lower: Vec<f64> = layout.demand.iter().map(|d| (d - hi).max(-gamma)).collect();
    let upper: Vec<f64> = layout.demand.iter().map(|d| (d - lo).min(gamma)).collect();
    let w = layout.weights();
    let paths: Vec<Vec<usize>> = layout.leaves.iter().map(|&l| layout.path_to(l)).collect();

    let rho =
        4.0 * w.iter().fold(0.0_f64, |m, v| m.max(*v)) / layout.dt.iter().fold(f64::INFINITY, |m, v| m.min(*v)).powi(2);
    let a_norm2: f64 = paths
        .iter()
        .map(|p| p.iter().map(|&v| layout.dt[v].powi(2)).sum::<f64>())
        .sum();
    let lip = 2.0 * w.iter().fold(0.0_f64, |m, v| m.max(*v)) + rho * a_norm2;
    let step = 1.0 / lip;

    let sums = |x: &[f64]| -> Vec<f64> {
        paths
            .iter()
            .map(|p| p.iter().map(|&v| layout.dt[v] * x[v]).sum())
            .collect()
    };
    let mut mu = vec![0.0; paths.len()];
    let mut x = vec![0.0; n];
    let mut outer = 0;
    let mut viol = f64::INFINITY;
    while outer < 500 {
        outer += 1;
        // FISTA on f(x) + Σ μ g + ρ/2 Σ g² over the box
        let mut z = x.clone();
        let mut t = 1.0_f64;
        for _ in 0..20_000 {
            let g = sums(&z);
            let mut grad: Vec<f64> = (0..n).map(|v| 2.0 * w[v] * (z[v] - y[v])).collect();
            for (p, path) in paths.iter().enumerate() {
                let c = mu[p] + rho * g[p];
                for &v in path {
                    grad[v] += c * layout.dt[v];
                }
            }
            let next: Vec<f64> = (0..n)
                .map(|v| (z[v] - step * grad[v]).clamp(lower[v], upper[v]))
                .collect();
            let moved = next.iter().zip(&x).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            z = (0..n)
                .map(|v| next[v] + (t - 1.0) / t_next * (next[v] - x[v]))
                .collect();
            x = next;
            t = t_next;
            if moved < 1e-15 {
                break;
            }
        }
        let g = sums(&x);
        viol = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (m, gv) in mu.iter_mut().zip(&g) {
            *m += rho * gv;
        }
        if viol < 1e-13 {
            break;
        }
    }
    Ok(OracleSolution {
        point: x,
        periodicity: viol,
        outer_iterations: outer,
    })
}

/// A random admissible policy on a chain (grid or step) with no structural
/// limits: a random mean-zero shape scaled uniformly within the net box.
pub fn random_feasible_policy(demand: &Demand, set: &FeasibleSet, rng: &mut impl Rng) -> Result<Policy, FeasibleError> {
    if set.has_structural() {
        return Err(FeasibleError::Parameter(
            "random policies support the net box only".into(),
        ));
    }
    let layout = Layout::of(demand);
    if layout.leaves.len() != 1 {
        return Err(FeasibleError::Parameter("random policies need a chain".into()));
    }
    set.admits_zero(demand)?;
    let (lo, hi) = set.net_bounds(demand);
    let raw: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = layout.integral(&raw);
    let shape: Vec<f64> = raw.iter().map(|r| r - mean).collect();
    // largest s with lo <= D - s·shape <= hi
    let mut s_max = f64::INFINITY;
    for (d, b) in layout.demand.iter().zip(&shape) {
        if *b > 0.0 {
            s_max = s_max.min((d - lo) / b);
        } else if *b < 0.0 {
            s_max = s_max.min((d - hi) / b);
        }
    }
    if !s_max.is_finite() {
        s_max = 0.0;
    }
    let s = rng.random_range(0.0..=1.0) * s_max;
    Ok(Policy::from_vector(demand, shape.iter().map(|b| s * b).collect()))
}
