//! Price of Anarchy: the three-case ratio, the linear and step pipelines, and
//! the named instance families with their closed-form bounds.

use rayon::prelude::*;
use serde::Serialize;

use crate::bernstein::{corollary_bound, lift_price, BernsteinError, DEFAULT_MAX_LIFT_DEGREE};
use crate::demand::{Demand, DemandError, StepDemand};
use crate::feasible::{FeasibleSet, Policy, ProjectOptions};
use crate::prices::{PriceError, PriceFunction};
use crate::solvers::{
    k_star_quadratic, solve_cb_averaging, solve_cb_linear, solve_dcb_linear, solve_dcb_step, wel, SolveError,
    SolveResult, StepOptions,
};

/// Margin keeping sweep grids off the degenerate edges of `(0, 1)²`.
pub const SWEEP_MARGIN: f64 = 1e-4;
/// Slack allowed when checking a measured PoA against a closed-form bound.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoaError {
    #[error("no decentralized welfare values given")]
    EmptyDcbSet,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{what}: measured {measured} violates bound {bound}")]
    BoundViolated {
        what: &'static str,
        measured: f64,
        bound: f64,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Bernstein(#[from] BernsteinError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Price(#[from] PriceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PoaCase {
    Finite,
    Unity,
    Infinite,
}

/// Why an infinite PoA was declared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfiniteKind {
    /// The worst decentralized policy raises social cost.
    Negative,
    /// It does nothing within tolerance while the centralized one helps.
    ZeroWithPositiveCb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoaResult {
    pub case: PoaCase,
    /// Set for `Finite` only.
    pub value: Option<f64>,
    pub wel_cb: f64,
    pub wel_dcb_min: f64,
    pub near_optimal_count: usize,
    pub infinite: Option<InfiniteKind>,
    pub tol: f64,
}

impl PoaResult {
    /// The ratio as a number: 1 for `Unity`, `+∞` for `Infinite`.
    pub fn ratio(&self) -> f64 {
        match self.case {
            PoaCase::Finite => self.value.unwrap_or(f64::NAN),
            PoaCase::Unity => 1.0,
            PoaCase::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for PoaResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.case, self.infinite) {
            (PoaCase::Finite, _) => write!(f, "Finite {:.6}", self.ratio()),
            (PoaCase::Unity, _) => write!(f, "Unity"),
            (PoaCase::Infinite, Some(InfiniteKind::Negative)) => write!(f, "Infinite (negative)"),
            (PoaCase::Infinite, _) => write!(f, "Infinite (zero-with-positive-cb)"),
        }
    }
}

/// `1e-9 · max(1, |wel_cb|)`.
pub fn default_tol(wel_cb: f64) -> f64 {
    1e-9 * wel_cb.abs().max(1.0)
}

/// Three-case PoA from the centralized welfare and the welfare of every
/// revenue-optimal decentralized policy. The worst of those is used.
pub fn compute_poa(wel_cb: f64, wel_dcb_set: &[f64], tol: f64) -> Result<PoaResult, PoaError> {
    if wel_dcb_set.is_empty() {
        return Err(PoaError::EmptyDcbSet);
    }
    if !(tol >= 0.0) {
        return Err(PoaError::Parameter(format!("tol must be >= 0, got {tol}")));
    }
    let min = wel_dcb_set.iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = PoaResult {
        case: PoaCase::Finite,
        value: None,
        wel_cb,
        wel_dcb_min: min,
        near_optimal_count: wel_dcb_set.len(),
        infinite: None,
        tol,
    };
    if wel_cb.abs() <= tol && min.abs() <= tol {
        out.case = PoaCase::Unity;
    } else if min <= -tol {
        out.case = PoaCase::Infinite;
        out.infinite = Some(InfiniteKind::Negative);
    } else if min < tol {
        out.case = PoaCase::Infinite;
        out.infinite = Some(InfiniteKind::ZeroWithPositiveCb);
    } else {
        out.value = Some(wel_cb / min);
    }
    Ok(out)
}

/// PoA together with the two solves behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoaReport {
    pub poa: PoaResult,
    pub cb: SolveResult,
    pub dcb: SolveResult,
}

/// Linear price `a z + b`: centralized and decentralized optima by projection.
pub fn poa_linear(
    demand: &Demand,
    set: &FeasibleSet,
    a: f64,
    b: f64,
    opts: &ProjectOptions,
) -> Result<PoaReport, PoaError> {
    let price = PriceFunction::linear(a, b)?;
    let cb = solve_cb_linear(demand, &price, set, opts)?;
    let dcb = solve_dcb_linear(demand, &price, set, opts)?;
    let poa = compute_poa(cb.wel, &[dcb.wel], default_tol(cb.wel))?;
    Ok(PoaReport { poa, cb, dcb })
}

/// Step-instance PoA for an arbitrary price: full smoothing for the
/// centralized battery, the scalar revenue search for the decentralized one.
/// The tolerance is relative to `wel_cb`, since step welfare can be tiny.
pub fn poa_step(step: &StepDemand, price: &PriceFunction, opts: &StepOptions) -> Result<PoaReport, PoaError> {
    let demand: Demand = (*step).into();
    let cb = solve_cb_averaging(&demand, price, &FeasibleSet::unconstrained())?;
    let dcb = solve_dcb_step(step, price, opts)?;
    let wels: Vec<f64> = dcb.near_optimal_set.iter().map(|c| c.wel).chain([dcb.wel]).collect();
    let poa = compute_poa(cb.wel, &wels, 1e-9 * cb.wel.abs())?;
    Ok(PoaReport { poa, cb, dcb })
}

fn scalar_k(policy: &Policy) -> f64 {
    match policy {
        Policy::ScalarK { k } => *k,
        _ => f64::NAN,
    }
}

/// One cell of a step-family evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepPoa {
    pub x: f64,
    pub eps: f64,
    pub d: u32,
    pub k_star: f64,
    pub poa: PoaResult,
}

/// `P(z) = (d+1) z^d` on the `(x, ε)` step instance. For `d = 2` the
/// decentralized optimum comes from the closed form for `k*`.
pub fn poa_step_monomial(x: f64, eps: f64, d: u32) -> Result<StepPoa, PoaError> {
    let step = StepDemand::from_params(x, eps)?;
    let price = PriceFunction::monomial(f64::from(d) + 1.0, d)?;
    if d == 2 {
        let demand: Demand = step.into();
        let cb = solve_cb_averaging(&demand, &price, &FeasibleSet::unconstrained())?;
        let k = k_star_quadratic(x, eps)?;
        let w = wel(&Policy::ScalarK { k }, &demand, &price)?;
        let poa = compute_poa(cb.wel, &[w], 1e-9 * cb.wel.abs())?;
        return Ok(StepPoa {
            x,
            eps,
            d,
            k_star: k,
            poa,
        });
    }
    let rep = poa_step(&step, &price, &StepOptions::default())?;
    Ok(StepPoa {
        x,
        eps,
        d,
        k_star: scalar_k(&rep.dcb.policy),
        poa: rep.poa,
    })
}

/// Quadratic-price step PoA as a function of the optimal `k` alone,
/// `(8k - 9k² - 1) / (k² (5k² - 16k + 9))`. Decreasing on `(1/3, √3/3)`
/// from 27/19.
pub fn quadratic_poa_from_k(k: f64) -> f64 {
    (8.0 * k - 9.0 * k * k - 1.0) / (k * k * (5.0 * k * k - 16.0 * k + 9.0))
}

/// `1 / (1 - (d/(d+1))^{d+1})`: 4/3 at `d = 1`, rising to `e/(e-1)`.
pub fn lower_bound_value(d: u64) -> Result<f64, PoaError> {
    if d == 0 {
        return Err(PoaError::Parameter("d must be >= 1".into()));
    }
    let m = d as f64 + 1.0;
    let q = (m * (-1.0 / m).ln_1p()).exp();
    Ok(1.0 / (1.0 - q))
}

/// One row of a sweep. Family-specific fields are `None` when unused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub x: Option<f64>,
    pub eps: Option<f64>,
    pub d: Option<u32>,
    pub delta: Option<f64>,
    pub k_star: Option<f64>,
    /// Closed-form bound the cell is compared against.
    pub bound: Option<f64>,
    pub poa: PoaResult,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub family: String,
    pub cells: Vec<SweepCell>,
    /// Largest finite PoA and the index of its cell.
    pub supremum: Option<(f64, usize)>,
}

impl SweepTable {
    fn new(family: &str, cells: Vec<SweepCell>) -> Self {
        let supremum = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.poa.case == PoaCase::Finite)
            .map(|(i, c)| (c.poa.ratio(), i))
            .fold(None, |acc: Option<(f64, usize)>, (v, i)| match acc {
                Some((best, _)) if best >= v => acc,
                _ => Some((v, i)),
            });
        SweepTable {
            family: family.to_string(),
            cells,
            supremum,
        }
    }

    pub fn flagged(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| c.flagged)
    }

    /// The cell attaining the supremum.
    pub fn argmax(&self) -> Option<&SweepCell> {
        self.supremum.map(|(_, i)| &self.cells[i])
    }
}

/// `n` points evenly spread over `[m, 1 - m]`.
pub fn sweep_axis(n: usize, margin: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n)
            .map(|i| margin + (1.0 - 2.0 * margin) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Monomial step family over an `nx × neps` grid. Cells above
/// `min(2, lower_bound_value(d)) + 1e-6` are flagged, not rejected.
pub fn sweep_monomial(d: u32, nx: usize, neps: usize) -> Result<SweepTable, PoaError> {
    if nx == 0 || neps == 0 {
        return Err(PoaError::Parameter("sweep grids need at least one point".into()));
    }
    let limit = lower_bound_value(u64::from(d))?.min(2.0) + BOUND_SLACK;
    let xs = sweep_axis(nx, SWEEP_MARGIN);
    let es = sweep_axis(neps, SWEEP_MARGIN);
    let cells = (0..nx * neps)
        .into_par_iter()
        .map(|i| {
            let s = poa_step_monomial(xs[i / neps], es[i % neps], d)?;
            Ok(SweepCell {
                x: Some(s.x),
                eps: Some(s.eps),
                d: Some(d),
                delta: None,
                k_star: Some(s.k_star),
                bound: Some(limit - BOUND_SLACK),
                flagged: s.poa.ratio() > limit,
                poa: s.poa,
            })
        })
        .collect::<Result<Vec<_>, PoaError>>()?;
    Ok(SweepTable::new("monomial", cells))
}

/// Counterexample-price instance with its measured optimum and bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyPoa {
    pub poa: PoaResult,
    /// Decentralized peak discharge.
    pub x_star: f64,
    pub bound: f64,
}

fn check_bound(what: &'static str, measured: f64, bound: f64) -> Result<(), PoaError> {
    if measured >= bound - BOUND_SLACK {
        Ok(())
    } else {
        Err(PoaError::BoundViolated { what, measured, bound })
    }
}

/// Peak at 1 on `[0, ε]`, zero after, with `P(z) = (d+1) z^d`. Errors when
/// the PoA drops below `(1 - ε^d) · lower_bound_value(d)` or the
/// decentralized discharge exceeds `1/(d+1)`.
pub fn theorem5_instance(d: u32, eps: f64) -> Result<FamilyPoa, PoaError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(PoaError::Parameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    let step = StepDemand::new(1.0, 0.0, eps)?;
    let price = PriceFunction::monomial(f64::from(d) + 1.0, d)?;
    let rep = poa_step(&step, &price, &StepOptions::default())?;
    let x_star = scalar_k(&rep.dcb.policy) * (1.0 - eps);
    let bound = (1.0 - eps.powi(d as i32)) * lower_bound_value(u64::from(d))?;
    check_bound("theorem5 PoA", rep.poa.ratio(), bound)?;
    let cap = 1.0 / (f64::from(d) + 1.0);
    if x_star > cap + BOUND_SLACK {
        return Err(PoaError::BoundViolated {
            what: "theorem5 discharge",
            measured: x_star,
            bound: cap,
        });
    }
    Ok(FamilyPoa {
        poa: rep.poa,
        x_star,
        bound,
    })
}

/// `(1/2 - ln 2δ) / (3/2 - 2δ)`.
pub fn theorem2_bound(delta: f64) -> Result<f64, PoaError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(PoaError::Parameter(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    Ok((0.5 - (2.0 * delta).ln()) / (1.5 - 2.0 * delta))
}

fn half_step() -> StepDemand {
    StepDemand {
        d1: 1.0,
        d2: 0.0,
        t1: 0.5,
    }
}

/// Half-day peak at 1 with the piecewise counterexample price.
pub fn theorem2_poa(delta: f64) -> Result<FamilyPoa, PoaError> {
    let bound = theorem2_bound(delta)?;
    let price = PriceFunction::counterexample(delta)?;
    let rep = poa_step(&half_step(), &price, &StepOptions::default())?;
    let x_star = 0.5 * scalar_k(&rep.dcb.policy);
    check_bound("theorem2 PoA", rep.poa.ratio(), bound)?;
    Ok(FamilyPoa {
        poa: rep.poa,
        x_star,
        bound,
    })
}

/// The counterexample price lifted to a convex polynomial within
/// `eps_target`, on the same half-day instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiftedPoa {
    pub family: FamilyPoa,
    pub degree: usize,
    pub gap: f64,
}

pub fn corollary1_poa(delta: f64, eps_target: f64) -> Result<LiftedPoa, PoaError> {
    if !(eps_target > 0.0 && eps_target <= delta) {
        return Err(PoaError::Parameter(format!(
            "eps_target must lie in (0, delta], got {eps_target}"
        )));
    }
    let bound = corollary_bound(delta)?;
    let lifted = lift_price(
        &PriceFunction::counterexample(delta)?,
        eps_target,
        DEFAULT_MAX_LIFT_DEGREE,
    )?;
    let rep = poa_step(&half_step(), &lifted.price, &StepOptions::default())?;
    let x_star = 0.5 * scalar_k(&rep.dcb.policy);
    check_bound("lifted PoA", rep.poa.ratio(), bound)?;
    if x_star > 2.0 * delta + 1e-4 {
        return Err(PoaError::BoundViolated {
            what: "lifted discharge",
            measured: x_star,
            bound: 2.0 * delta,
        });
    }
    Ok(LiftedPoa {
        family: FamilyPoa {
            poa: rep.poa,
            x_star,
            bound,
        },
        degree: lifted.degree,
        gap: lifted.gap,
    })
}

/// Counterexample family over a ladder of `δ`.
pub fn sweep_counterexample(deltas: &[f64]) -> Result<SweepTable, PoaError> {
    let cells = deltas
        .par_iter()
        .map(|&delta| {
            let f = theorem2_poa(delta)?;
            Ok(SweepCell {
                x: Some(f.x_star),
                eps: None,
                d: None,
                delta: Some(delta),
                k_star: Some(2.0 * f.x_star),
                bound: Some(f.bound),
                flagged: false,
                poa: f.poa,
            })
        })
        .collect::<Result<Vec<_>, PoaError>>()?;
    Ok(SweepTable::new("counterexample", cells))
}

/// Lower-bound family for `d = 1..=dmax`.
pub fn sweep_theorem5(dmax: u32, eps: f64) -> Result<SweepTable, PoaError> {
    let cells = (1..=dmax)
        .into_par_iter()
        .map(|d| {
            let f = theorem5_instance(d, eps)?;
            Ok(SweepCell {
                x: Some(f.x_star),
                eps: Some(eps),
                d: Some(d),
                delta: None,
                k_star: Some(f.x_star / (1.0 - eps)),
                bound: Some(f.bound),
                flagged: false,
                poa: f.poa,
            })
        })
        .collect::<Result<Vec<_>, PoaError>>()?;
    Ok(SweepTable::new("theorem5", cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{example2_path, DemandPath, TimeGrid};

    #[test]
    fn three_cases() {
        let f = compute_poa(0.5, &[0.375], 1e-9).unwrap();
        assert_eq!(f.case, PoaCase::Finite);
        assert!((f.ratio() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(compute_poa(0.0, &[0.0], 1e-9).unwrap().case, PoaCase::Unity);
        let neg = compute_poa(0.3, &[-0.01], 1e-9).unwrap();
        assert_eq!(
            (neg.case, neg.infinite),
            (PoaCase::Infinite, Some(InfiniteKind::Negative))
        );
        let zero = compute_poa(0.3, &[1e-12], 1e-9).unwrap();
        assert_eq!(zero.infinite, Some(InfiniteKind::ZeroWithPositiveCb));
        assert!(compute_poa(0.3, &[], 1e-9).is_err());
    }

    #[test]
    fn worst_dcb_policy_is_used() {
        let r = compute_poa(0.6, &[0.5, 0.3, 0.4], 1e-9).unwrap();
        assert_eq!(r.wel_dcb_min, 0.3);
        assert_eq!(r.near_optimal_count, 3);
        assert!((r.ratio() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn example2_linear() {
        let d: Demand = example2_path(TimeGrid::new(2000).unwrap()).into();
        let set = FeasibleSet::with_box(0.0, 2.0);
        let r = poa_linear(&d, &set, 2.0, 0.0, &ProjectOptions::default()).unwrap();
        assert!((r.poa.ratio() - 4.0 / 3.0).abs() < 5e-3);
    }

    #[test]
    fn constant_demand_is_unity() {
        let d: Demand = DemandPath::constant(TimeGrid::new(10).unwrap(), 0.4).unwrap().into();
        let r = poa_linear(&d, &FeasibleSet::default(), 1.0, 0.0, &ProjectOptions::default()).unwrap();
        assert_eq!(r.poa.case, PoaCase::Unity);
    }

    #[test]
    fn lower_bound_values() {
        assert!((lower_bound_value(1).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!((lower_bound_value(2).unwrap() - 27.0 / 19.0).abs() < 1e-14);
        let e = std::f64::consts::E;
        assert!((lower_bound_value(10_000).unwrap() - e / (e - 1.0)).abs() < 1e-4);
        // direct evaluation at d = 3: 1 / (1 - 81/256)
        assert!((lower_bound_value(3).unwrap() - 256.0 / 175.0).abs() < 1e-14);
        assert!(lower_bound_value(0).is_err());
    }

    #[test]
    fn quadratic_closed_form_ratio_matches_pipeline() {
        for (x, eps) in [(0.3, 0.2), (0.7, 0.9), (0.05, 0.5), (0.5, 0.5)] {
            let s = poa_step_monomial(x, eps, 2).unwrap();
            let closed = quadratic_poa_from_k(s.k_star);
            assert!((s.poa.ratio() - closed).abs() < 1e-8, "{x} {eps}");
        }
    }

    #[test]
    fn quadratic_ratio_endpoints() {
        assert!((quadratic_poa_from_k(1.0 / 3.0) - 27.0 / 19.0).abs() < 1e-14);
        let hi = quadratic_poa_from_k(3f64.sqrt() / 3.0);
        assert!(hi > 1.0 && hi < 27.0 / 19.0);
    }

    #[test]
    fn quadratic_corner_reaches_27_over_19() {
        let s = poa_step_monomial(1e-4, 1e-4, 2).unwrap();
        assert!((s.poa.ratio() - 27.0 / 19.0).abs() < 1e-3);
    }

    #[test]
    fn linear_step_stays_below_four_thirds() {
        for (x, eps) in [(0.1, 0.1), (0.5, 0.9), (0.9, 0.3)] {
            let s = poa_step_monomial(x, eps, 1).unwrap();
            assert!(s.poa.ratio() <= 4.0 / 3.0 + 1e-6);
            assert!((s.k_star - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn sweep_supremum_is_max_of_finite_cells() {
        let t = sweep_monomial(2, 6, 5).unwrap();
        assert_eq!(t.cells.len(), 30);
        let max = t.cells.iter().map(|c| c.poa.ratio()).fold(0.0, f64::max);
        assert_eq!(t.supremum.unwrap().0, max);
        assert!(max <= 27.0 / 19.0 + 1e-6);
        assert_eq!(t.flagged().count(), 0);
        let corner = t.argmax().unwrap();
        assert_eq!((corner.x, corner.eps), (Some(SWEEP_MARGIN), Some(SWEEP_MARGIN)));
    }

    #[test]
    fn theorem5_small_d() {
        let f = theorem5_instance(1, 1e-3).unwrap();
        assert!(f.poa.ratio() >= 4.0 / 3.0 - 5e-3);
        let f3 = theorem5_instance(3, 1e-3).unwrap();
        // 1/(1 - (3/4)^4) = 256/175
        assert!(f3.poa.ratio() >= (1.0 - 1e-9) * 256.0 / 175.0 - 1e-6);
        let loose = theorem5_instance(1, 0.5).unwrap();
        assert!(loose.poa.ratio() >= 0.5 * 4.0 / 3.0);
    }

    #[test]
    fn theorem5_centralized_welfare() {
        let (d, eps) = (3, 0.01);
        let step = StepDemand::new(1.0, 0.0, eps).unwrap();
        let price = PriceFunction::monomial(4.0, d).unwrap();
        let rep = poa_step(&step, &price, &StepOptions::default()).unwrap();
        assert!((rep.cb.wel - (eps - eps.powi(4))).abs() < 1e-15);
    }

    #[test]
    fn theorem2_bound_arithmetic() {
        // (0.5 - ln 0.02) / 1.48
        assert!((theorem2_bound(0.01).unwrap() - (0.5 + 3.912_023_005_428_146) / 1.48).abs() < 1e-12);
        assert!((theorem2_bound(0.01).unwrap() - 2.981).abs() < 1e-3);
        assert!(theorem2_bound(0.5).is_err());
    }

    #[test]
    fn theorem2_ladder() {
        let mut last = 0.0;
        for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let f = theorem2_poa(delta).unwrap();
            assert!((f.x_star - (delta - delta * delta)).abs() < 1e-4);
            assert!(f.poa.ratio() > last);
            last = f.poa.ratio();
        }
        assert!(last > 5.9);
    }
}
