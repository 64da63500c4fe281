//! Welfare and revenue of a policy, and the centralized (welfare-maximising)
//! and decentralized (revenue-maximising) battery solvers.

mod brute;
mod linear;
mod step;

pub use brute::brute_force_policy;
pub use linear::{certificate_linear, solve_cb_averaging, solve_cb_linear, solve_dcb_linear, CertificateOptions};
pub use step::{k_lower_bound, k_star_quadratic, solve_dcb_step, step_revenue, StepOptions, DEFAULT_STEP_GRID};

use serde::{Deserialize, Serialize};

use crate::demand::{Demand, DemandError};
use crate::feasible::{FeasibleError, Layout, Policy};
use crate::prices::{PriceError, PriceFunction};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("{0} needs a linear price, got {1}")]
    NotLinear(&'static str, &'static str),
    #[error("{0} needs a deterministic demand")]
    NotDeterministic(&'static str),
    #[error("unsupported instance: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("balanced net demand {level} lies outside the box [{lo}, {hi}]")]
    AverageOutsideBox { level: f64, lo: f64, hi: f64 },
    #[error("lattice search over {points} points exceeds the limit")]
    TooLarge { points: u128 },
    #[error(transparent)]
    Feasible(#[from] FeasibleError),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

/// Which battery a solve or certificate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Battery {
    /// Centralized, maximises WEL.
    Cb,
    /// Decentralized, maximises REV.
    Dcb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Wel,
    Rev,
}

/// A step policy within the revenue tolerance of the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepCandidate {
    pub k: f64,
    pub rev: f64,
    pub wel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub policy: Policy,
    pub wel: f64,
    pub rev: f64,
    /// Largest first-order residual over the probes, when certified.
    pub certificate_residual: Option<f64>,
    /// Step solves only; the optimum itself is always included.
    pub near_optimal_set: Vec<StepCandidate>,
    pub converged: bool,
    pub iterations: usize,
}

impl SolveResult {
    /// Smallest welfare among revenue-optimal policies.
    pub fn worst_wel(&self) -> f64 {
        self.near_optimal_set.iter().map(|c| c.wel).fold(self.wel, f64::min)
    }
}

/// `E ∫ [G(D) - G(D - B)] dt`.
pub fn wel(policy: &Policy, demand: &Demand, price: &PriceFunction) -> Result<f64, SolveError> {
    let b = policy.to_vector(demand)?;
    wel_vector(&Layout::of(demand), &b, price)
}

/// `E ∫ B P(D - B) dt`.
pub fn rev(policy: &Policy, demand: &Demand, price: &PriceFunction) -> Result<f64, SolveError> {
    let b = policy.to_vector(demand)?;
    rev_vector(&Layout::of(demand), &b, price)
}

pub(crate) fn wel_vector(layout: &Layout, b: &[f64], price: &PriceFunction) -> Result<f64, SolveError> {
    let mut acc = 0.0;
    for i in 0..layout.len() {
        if b[i] == 0.0 {
            continue;
        }
        let d = layout.demand[i];
        acc += layout.prob[i] * layout.dt[i] * price.cost_saving(d, b[i])?;
    }
    Ok(acc)
}

pub(crate) fn rev_vector(layout: &Layout, b: &[f64], price: &PriceFunction) -> Result<f64, SolveError> {
    let mut acc = 0.0;
    for i in 0..layout.len() {
        if b[i] == 0.0 {
            continue;
        }
        let d = layout.demand[i];
        acc += layout.prob[i] * layout.dt[i] * b[i] * price.price(d - b[i])?;
    }
    Ok(acc)
}
