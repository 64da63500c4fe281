//! Battery policies and the admissible set: net-demand box, per-path
//! periodicity, and optional power, capacity and ramp limits.

mod layout;
mod project;

pub use layout::Layout;
pub use project::{project, project_vector, ProjectOptions, Projection};

use serde::{Deserialize, Serialize};

use crate::demand::Demand;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeasibleError {
    #[error("{policy} policy does not match {demand} demand")]
    Mismatch { policy: &'static str, demand: &'static str },
    #[error("policy has {got} values, demand has {want} nodes")]
    Length { got: usize, want: usize },
    #[error("invalid constraint: {0}")]
    Parameter(String),
    #[error("zero policy infeasible: demand {value} at node {node} outside box [{lo}, {hi}]")]
    ZeroInfeasible { node: usize, value: f64, lo: f64, hi: f64 },
}

/// A discharge schedule (`B > 0` discharges, `B < 0` charges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Grid {
        values: Vec<f64>,
    },
    Tree {
        values: Vec<f64>,
    },
    Step {
        b1: f64,
        b2: f64,
    },
    /// `B = k (D - D̄)` on a step demand.
    ScalarK {
        k: f64,
    },
}

impl Policy {
    pub fn kind(&self) -> &'static str {
        match self {
            Policy::Grid { .. } => "grid",
            Policy::Tree { .. } => "tree",
            Policy::Step { .. } => "step",
            Policy::ScalarK { .. } => "scalar-k",
        }
    }

    pub fn zero(demand: &Demand) -> Self {
        Self::from_vector(demand, vec![0.0; Layout::of(demand).len()])
    }

    /// Wraps node values in the representation matching `demand`.
    pub fn from_vector(demand: &Demand, values: Vec<f64>) -> Self {
        match demand {
            Demand::Path(_) => Policy::Grid { values },
            Demand::Tree(_) => Policy::Tree { values },
            Demand::Step(_) => Policy::Step {
                b1: values[0],
                b2: values[1],
            },
        }
    }

    /// Node values of the policy on `demand`'s layout.
    pub fn to_vector(&self, demand: &Demand) -> Result<Vec<f64>, FeasibleError> {
        let mismatch = || FeasibleError::Mismatch {
            policy: self.kind(),
            demand: demand.kind(),
        };
        let values = match (self, demand) {
            (Policy::Grid { values }, Demand::Path(_)) | (Policy::Tree { values }, Demand::Tree(_)) => values.clone(),
            (Policy::Step { b1, b2 }, Demand::Step(_)) => vec![*b1, *b2],
            (Policy::ScalarK { k }, Demand::Step(s)) => {
                // D - average, written so the two legs balance exactly
                let gap = s.d1 - s.d2;
                vec![k * (1.0 - s.t1) * gap, -k * s.t1 * gap]
            }
            _ => return Err(mismatch()),
        };
        let want = Layout::of(demand).len();
        if values.len() != want {
            return Err(FeasibleError::Length {
                got: values.len(),
                want,
            });
        }
        Ok(values)
    }
}

/// Constraint parameters. Periodicity is always imposed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibleSet {
    /// Net-demand bounds; defaults to the demand's normalisation.
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub net_box: Option<(f64, f64)>,
    /// `|B| <= power`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    /// `|∫_{t1}^{t2} B dt| <= capacity` for every window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    /// `|B'| <= ramp`, discretised between adjacent intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<f64>,
}

impl FeasibleSet {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    pub fn with_box(lo: f64, hi: f64) -> Self {
        FeasibleSet {
            net_box: Some((lo, hi)),
            ..Self::default()
        }
    }

    pub fn has_structural(&self) -> bool {
        self.power.is_some() || self.capacity.is_some() || self.ramp.is_some()
    }

    pub fn check_params(&self) -> Result<(), FeasibleError> {
        if let Some((lo, hi)) = self.net_box {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(FeasibleError::Parameter(format!(
                    "box needs lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        for (name, v) in [("power", self.power), ("capacity", self.capacity), ("ramp", self.ramp)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(FeasibleError::Parameter(format!("{name} must be >= 0, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn net_bounds(&self, demand: &Demand) -> (f64, f64) {
        self.net_box.unwrap_or_else(|| demand.bounds())
    }

    /// Verifies the parameters and that doing nothing is admissible.
    pub fn admits_zero(&self, demand: &Demand) -> Result<(), FeasibleError> {
        self.check_params()?;
        let (lo, hi) = self.net_bounds(demand);
        let layout = Layout::of(demand);
        for (node, &value) in layout.demand.iter().enumerate() {
            if value < lo - 1e-12 || value > hi + 1e-12 {
                return Err(FeasibleError::ZeroInfeasible { node, value, lo, hi });
            }
        }
        Ok(())
    }

    /// Per-node bounds on `B` from the net-demand box and the power limit.
    pub(crate) fn policy_bounds(&self, layout: &Layout, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let g = self.power.unwrap_or(f64::INFINITY);
        layout
            .demand
            .iter()
            .map(|d| ((d - hi).max(-g), (d - lo).min(g)))
            .unzip()
    }

    pub(crate) fn ramp_bound(&self, layout: &Layout, parent: usize, child: usize) -> Option<f64> {
        self.ramp.map(|r| r * 0.5 * (layout.dt[parent] + layout.dt[child]))
    }
}

/// Worst violation of each constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub tol: f64,
    pub net_box: f64,
    pub power: f64,
    pub capacity: f64,
    pub ramp: f64,
    pub periodicity: f64,
    /// One decision per node, so always zero.
    pub nonanticipativity: f64,
}

impl FeasibilityReport {
    pub fn worst(&self) -> f64 {
        [self.net_box, self.power, self.capacity, self.ramp, self.periodicity]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Evaluates every constraint for `policy` under the grid convention.
pub fn check(
    policy: &Policy,
    demand: &Demand,
    set: &FeasibleSet,
    tol: f64,
) -> Result<FeasibilityReport, FeasibleError> {
    set.check_params()?;
    let b = policy.to_vector(demand)?;
    let layout = Layout::of(demand);
    Ok(check_vector(&layout, set, set.net_bounds(demand), &b, tol))
}

pub(crate) fn check_vector(
    layout: &Layout,
    set: &FeasibleSet,
    (lo, hi): (f64, f64),
    b: &[f64],
    tol: f64,
) -> FeasibilityReport {
    let mut net_box = 0.0_f64;
    let mut power = 0.0_f64;
    for (d, x) in layout.demand.iter().zip(b) {
        let net = d - x;
        net_box = net_box.max(net - hi).max(lo - net);
        if let Some(g) = set.power {
            power = power.max(x.abs() - g);
        }
    }
    let mut ramp = 0.0_f64;
    for c in 0..layout.len() {
        if let Some(p) = layout.parent[c] {
            if let Some(bound) = set.ramp_bound(layout, p, c) {
                ramp = ramp.max((b[c] - b[p]).abs() - bound);
            }
        }
    }
    let mut capacity = 0.0_f64;
    if let Some(cap) = set.capacity {
        for v in 0..layout.len() {
            let mut acc = 0.0;
            let mut cur = Some(v);
            while let Some(u) = cur {
                acc += layout.dt[u] * b[u];
                capacity = capacity.max(acc.abs() - cap);
                cur = layout.parent[u];
            }
        }
    }
    let periodicity = layout
        .path_integrals(b)
        .into_iter()
        .fold(0.0_f64, |m, s| m.max(s.abs()));
    let mut report = FeasibilityReport {
        feasible: false,
        tol,
        net_box: net_box.max(0.0),
        power: power.max(0.0),
        capacity: capacity.max(0.0),
        ramp: ramp.max(0.0),
        periodicity,
        nonanticipativity: 0.0,
    };
    report.feasible = report.worst() <= tol;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{example2_path, DemandPath, StepDemand, TimeGrid};

    #[test]
    fn zero_is_feasible() {
        let d: Demand = DemandPath::unit(vec![0.2, 0.9, 0.4, 0.6]).unwrap().into();
        let set = FeasibleSet {
            power: Some(0.0),
            capacity: Some(0.0),
            ramp: Some(0.0),
            ..Default::default()
        };
        let r = check(&Policy::zero(&d), &d, &set, 0.0).unwrap();
        assert!(r.feasible);
        assert!(set.admits_zero(&d).is_ok());
    }

    #[test]
    fn example2_policies_against_box() {
        let grid = TimeGrid::new(2000).unwrap();
        let d: Demand = example2_path(grid).into();
        let sin: Vec<f64> = grid
            .times()
            .iter()
            .map(|t| (2.0 * std::f64::consts::PI * t).sin())
            .collect();
        let cb = Policy::Grid { values: sin.clone() };
        let half = Policy::Grid {
            values: sin.iter().map(|s| s / 2.0).collect(),
        };
        for hi in [2.0, 1.0] {
            let set = FeasibleSet::with_box(0.0, hi);
            assert!(check(&cb, &d, &set, 1e-12).unwrap().feasible);
        }
        assert!(
            check(&half, &d, &FeasibleSet::with_box(0.0, 2.0), 1e-12)
                .unwrap()
                .feasible
        );
        let r = check(&half, &d, &FeasibleSet::with_box(0.0, 1.0), 1e-12).unwrap();
        assert!(!r.feasible);
        assert!((r.net_box - 0.5).abs() < 1e-12);
    }

    #[test]
    fn step_periodicity_residual() {
        let s = StepDemand::new(1.0, 0.0, 0.5).unwrap();
        let d: Demand = s.into();
        // 0.5 * 0.5 + 0.5 * (-0.3) = 0.1
        let p = Policy::Step { b1: 0.5, b2: -0.3 };
        let r = check(&p, &d, &FeasibleSet::default(), 1e-12).unwrap();
        assert!((r.periodicity - 0.1).abs() < 1e-15);
        assert!(!r.feasible);
        let k = Policy::ScalarK { k: 0.7 };
        assert!(check(&k, &d, &FeasibleSet::default(), 1e-15).unwrap().feasible);
    }

    #[test]
    fn representation_mismatch() {
        let d: Demand = StepDemand::new(1.0, 0.0, 0.5).unwrap().into();
        let p = Policy::Grid { values: vec![0.0, 0.0] };
        assert!(matches!(
            check(&p, &d, &FeasibleSet::default(), 0.0),
            Err(FeasibleError::Mismatch { .. })
        ));
        let g: Demand = DemandPath::unit(vec![0.1, 0.2, 0.3]).unwrap().into();
        let short = Policy::Grid { values: vec![0.0] };
        assert!(matches!(
            check(&short, &g, &FeasibleSet::default(), 0.0),
            Err(FeasibleError::Length { .. })
        ));
    }

    #[test]
    fn capacity_counts_every_window() {
        let d: Demand = DemandPath::unit(vec![0.5; 4]).unwrap().into();
        let p = Policy::Grid {
            values: vec![0.4, 0.4, -0.4, -0.4],
        };
        let set = FeasibleSet {
            capacity: Some(0.1),
            ..Default::default()
        };
        let r = check(&p, &d, &set, 1e-12).unwrap();
        // first two intervals integrate to 0.2
        assert!((r.capacity - 0.1).abs() < 1e-15);
        assert_eq!(r.periodicity, 0.0);
    }

    #[test]
    fn zero_infeasible_when_demand_outside_box() {
        let d: Demand = example2_path(TimeGrid::new(8).unwrap()).into();
        assert!(FeasibleSet::with_box(0.0, 1.0).admits_zero(&d).is_err());
        assert!(FeasibleSet::default().admits_zero(&d).is_ok());
    }

    #[test]
    fn set_serde_shape() {
        let s: FeasibleSet = serde_json::from_str(r#"{"box":[0,2],"power":0.3}"#).unwrap();
        assert_eq!(s.net_box, Some((0.0, 2.0)));
        assert_eq!(s.power, Some(0.3));
        assert!(serde_json::from_str::<FeasibleSet>(r#"{"boxx":[0,1]}"#).is_err());
        let back: FeasibleSet = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
