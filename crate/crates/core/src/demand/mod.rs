//! Demand models on the normalised day `[0, 1]`.
//!
//! Grid quantities are piecewise constant with the left value on each interval,
//! so `∫ f dt = (1/n) Σ f_i` holds exactly.

mod gp;
mod tree;

pub use gp::{sample_gp_path, GpModel, GpSample, GpSampler};
pub use tree::{build_tree, ProbRule, ScenarioTree, TreeNode, TreeSpec, ValueRule, MAX_TREE_LEAVES};

use serde::{Deserialize, Serialize};

/// Demand values may leave their normalisation by this much.
pub const LEVEL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemandError {
    #[error("invalid demand parameter: {0}")]
    Parameter(String),
    #[error("demand value {value} at index {index} outside [{lo}, {hi}]")]
    OutOfRange { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("covariance factorisation failed for n = {n}; increase jitter (currently {jitter:e})")]
    Factorization { n: usize, jitter: f64 },
    #[error("scenario tree would have {leaves} leaves, limit is {MAX_TREE_LEAVES}")]
    TreeTooLarge { leaves: u128 },
    #[error("invalid scenario tree: {0}")]
    Tree(String),
}

/// `n` uniform intervals of `[0, 1]`; node `i` sits at `t_i = i/n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n: usize,
}

impl TimeGrid {
    pub fn new(n: usize) -> Result<Self, DemandError> {
        if n < 2 {
            return Err(DemandError::Parameter(format!("grid needs n >= 2, got {n}")));
        }
        Ok(TimeGrid { n })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.time(i)).collect()
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<(), DemandError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(DemandError::Parameter(format!(
            "normalisation needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn check_level(index: usize, value: f64, lo: f64, hi: f64) -> Result<f64, DemandError> {
    if !value.is_finite() || value < lo - LEVEL_SLACK || value > hi + LEVEL_SLACK {
        return Err(DemandError::OutOfRange { index, value, lo, hi });
    }
    Ok(value.clamp(lo, hi))
}

/// Deterministic demand sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPath {
    values: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl DemandPath {
    pub fn new(values: Vec<f64>, lo: f64, hi: f64) -> Result<Self, DemandError> {
        check_bounds(lo, hi)?;
        TimeGrid::new(values.len())?;
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| check_level(i, v, lo, hi))
            .collect::<Result<_, _>>()?;
        Ok(DemandPath { values, lo, hi })
    }

    /// Unit normalisation `[0, 1]`.
    pub fn unit(values: Vec<f64>) -> Result<Self, DemandError> {
        Self::new(values, 0.0, 1.0)
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Self, DemandError> {
        Self::new(grid.times().into_iter().map(f).collect(), lo, hi)
    }

    pub fn constant(grid: TimeGrid, level: f64) -> Result<Self, DemandError> {
        Self::from_fn(grid, |_| level, 0.0, 1.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid { n: self.values.len() }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn average(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// `D(t) = 1 + sin 2πt`, normalised to `[0, 2]`.
pub fn example2_path(grid: TimeGrid) -> DemandPath {
    let values = grid
        .times()
        .into_iter()
        .map(|t| (1.0 + (2.0 * std::f64::consts::PI * t).sin()).clamp(0.0, 2.0))
        .collect();
    DemandPath {
        values,
        lo: 0.0,
        hi: 2.0,
    }
}

/// Two-level demand: `d1` on `[0, t1]`, `d2` on `(t1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDemand {
    pub d1: f64,
    pub d2: f64,
    pub t1: f64,
}

impl StepDemand {
    pub fn new(d1: f64, d2: f64, t1: f64) -> Result<Self, DemandError> {
        for (name, v) in [("d1", d1), ("d2", d2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DemandError::Parameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(t1 > 0.0 && t1 < 1.0) {
            return Err(DemandError::Parameter(format!("t1 must lie in (0, 1), got {t1}")));
        }
        Ok(StepDemand { d1, d2, t1 })
    }

    /// Peak 1, average `x`, off-peak `(1-eps) x`.
    pub fn from_params(x: f64, eps: f64) -> Result<Self, DemandError> {
        if !(x > 0.0 && x < 1.0) {
            return Err(DemandError::Parameter(format!("x must lie in (0, 1), got {x}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(DemandError::Parameter(format!("eps must lie in (0, 1], got {eps}")));
        }
        let t1 = x * eps / ((1.0 - x) + x * eps);
        Self::new(1.0, (1.0 - eps) * x, t1)
    }

    pub fn average(&self) -> f64 {
        self.t1 * self.d1 + (1.0 - self.t1) * self.d2
    }
}

/// Any supported demand representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Demand {
    Path(DemandPath),
    Step(StepDemand),
    Tree(ScenarioTree),
}

impl Demand {
    /// Normalisation `[lo, hi]` of the demand levels.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Demand::Path(p) => p.bounds(),
            Demand::Step(_) => (0.0, 1.0),
            Demand::Tree(t) => t.bounds(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Demand::Tree(t) if t.leaves().len() > 1)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Demand::Path(_) => "path",
            Demand::Step(_) => "step",
            Demand::Tree(_) => "tree",
        }
    }

    /// Expected time-average `E ∫ D dt`.
    pub fn average(&self) -> f64 {
        match self {
            Demand::Path(p) => p.average(),
            Demand::Step(s) => s.average(),
            Demand::Tree(t) => t.average(),
        }
    }
}

impl From<DemandPath> for Demand {
    fn from(p: DemandPath) -> Self {
        Demand::Path(p)
    }
}

impl From<StepDemand> for Demand {
    fn from(s: StepDemand) -> Self {
        Demand::Step(s)
    }
}

impl From<ScenarioTree> for Demand {
    fn from(t: ScenarioTree) -> Self {
        Demand::Tree(t)
    }
}
