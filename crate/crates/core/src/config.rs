//! JSON instance configs: `{demand, price, constraints, grid, seed, tolerances}`.

use serde::{Deserialize, Serialize};

use crate::demand::{
    build_tree, example2_path, sample_gp_path, Demand, DemandError, DemandPath, GpModel, ProbRule, StepDemand,
    TimeGrid, TreeSpec, ValueRule,
};
use crate::feasible::{FeasibleError, FeasibleSet, ProjectOptions};
use crate::poa::{compute_poa, default_tol, poa_linear, poa_step, PoaError, PoaReport};
use crate::prices::{PriceError, PriceFunction};
use crate::solvers::{
    certificate_linear, solve_cb_averaging, solve_cb_linear, solve_dcb_linear, solve_dcb_step, Battery,
    CertificateOptions, SolveError, SolveResult, StepOptions,
};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {message} (line {line}, column {column})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config {field}: {message}")]
    Field { field: &'static str, message: String },
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error(transparent)]
    Feasible(#[from] FeasibleError),
}

/// Demand section, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DemandSpec {
    Step(StepSpec),
    Grid(GridValues),
    Gp(GpSpec),
    Tree(TreeFields),
    Example2(Example2Spec),
}

/// Either levels `d1, d2, t1` or the average/depth pair `x, eps`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

/// One value per interval; `n` is the number of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridValues {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

/// One seeded path on `grid.n` intervals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSpec {
    #[serde(default)]
    pub model: GpModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeFields {
    pub depth: usize,
    pub branching: usize,
    pub values: ValueRule,
    #[serde(default = "uniform_probs")]
    pub probs: ProbRule,
}

/// `1 + sin 2πt` on `grid.n` intervals, normalised to `[0, 2]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example2Spec {}

const DEMAND_KINDS: &[&str] = &["step", "grid", "gp", "tree", "example2"];

// Dispatches on `kind` by hand so errors inside the variant keep their path.
impl<'de> Deserialize<'de> for DemandSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut map = serde_json::Map::deserialize(de)?;
        let kind = match map.remove("kind") {
            Some(serde_json::Value::String(k)) => k,
            Some(other) => return Err(D::Error::custom(format!("kind must be a string, got {other}"))),
            None => return Err(D::Error::missing_field("kind")),
        };
        fn part<T: serde::de::DeserializeOwned, E: Error>(
            map: serde_json::Map<String, serde_json::Value>,
        ) -> Result<T, E> {
            serde_path_to_error::deserialize(serde_json::Value::Object(map)).map_err(|e| {
                let path = e.path().to_string();
                if path == "." {
                    E::custom(e.into_inner())
                } else {
                    E::custom(format!("{path}: {}", e.into_inner()))
                }
            })
        }
        match kind.as_str() {
            "step" => part(map).map(DemandSpec::Step),
            "grid" => part(map).map(DemandSpec::Grid),
            "gp" => part(map).map(DemandSpec::Gp),
            "tree" => part(map).map(DemandSpec::Tree),
            "example2" => part(map).map(DemandSpec::Example2),
            other => Err(D::Error::unknown_variant(other, DEMAND_KINDS)),
        }
    }
}

fn uniform_probs() -> ProbRule {
    ProbRule::Uniform
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Dykstra movement tolerance.
    pub project: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Relative revenue tolerance of the near-optimal set.
    pub rev: f64,
    pub step_grid: usize,
    /// PoA branch tolerance; the default depends on the pipeline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poa: Option<f64>,
    pub certificate_probes: usize,
    /// Largest certificate residual accepted for a linear solve.
    pub certificate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            project: 1e-9,
            max_iter: None,
            rev: 1e-9,
            step_grid: crate::solvers::DEFAULT_STEP_GRID,
            poa: None,
            certificate_probes: 256,
            certificate: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn project_options(&self) -> ProjectOptions {
        ProjectOptions {
            tol: self.project,
            max_iter: self.max_iter,
        }
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions {
            grid: self.step_grid,
            tol_rev: self.rev,
        }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub demand: DemandSpec,
    pub price: PriceFunction,
    #[serde(default)]
    pub constraints: FeasibleSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl InstanceConfig {
    /// Parses JSON, reporting the offending field path and position.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let (line, column) = (inner.line(), inner.column());
            let full = inner.to_string();
            let message = full
                .strip_suffix(&format!(" at line {line} column {column}"))
                .unwrap_or(&full)
                .to_string();
            ConfigError::Parse {
                path,
                line,
                column,
                message,
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialise")
    }

    fn grid_n(&self, what: &'static str) -> Result<TimeGrid, ConfigError> {
        let n = self.grid.map(|g| g.n).ok_or(ConfigError::Field {
            field: "grid",
            message: format!("{what} demand needs grid.n"),
        })?;
        Ok(TimeGrid::new(n)?)
    }

    fn build_demand(&self) -> Result<Demand, ConfigError> {
        let field = |message: String| ConfigError::Field {
            field: "demand",
            message,
        };
        Ok(match &self.demand {
            DemandSpec::Step(StepSpec { d1, d2, t1, x, eps }) => match (d1, d2, t1, x, eps) {
                (Some(d1), Some(d2), Some(t1), None, None) => StepDemand::new(*d1, *d2, *t1)?.into(),
                (None, None, None, Some(x), Some(eps)) => StepDemand::from_params(*x, *eps)?.into(),
                _ => return Err(field("step needs either d1, d2, t1 or x, eps".into())),
            },
            DemandSpec::Grid(GridValues { values, lo, hi }) => {
                if let Some(g) = self.grid {
                    if g.n != values.len() {
                        return Err(ConfigError::Field {
                            field: "grid",
                            message: format!("n = {} but demand has {} values", g.n, values.len()),
                        });
                    }
                }
                DemandPath::new(values.clone(), lo.unwrap_or(0.0), hi.unwrap_or(1.0))?.into()
            }
            DemandSpec::Gp(GpSpec { model }) => sample_gp_path(*model, self.grid_n("gp")?, self.seed)?.path.into(),
            DemandSpec::Tree(TreeFields {
                depth,
                branching,
                values,
                probs,
            }) => {
                let spec = TreeSpec {
                    depth: *depth,
                    branching: *branching,
                    values: values.clone(),
                    probs: probs.clone(),
                };
                build_tree(&spec, self.seed)?.into()
            }
            DemandSpec::Example2(_) => example2_path(self.grid_n("example2")?).into(),
        })
    }

    /// Builds and validates the instance; the zero policy must be admissible.
    pub fn build(&self) -> Result<Instance, ConfigError> {
        let demand = self.build_demand()?;
        self.price.check_params()?;
        self.constraints.admits_zero(&demand)?;
        Ok(Instance {
            demand,
            price: self.price.clone(),
            set: self.constraints,
            tolerances: self.tolerances,
            seed: self.seed,
        })
    }
}

/// A validated `(D, P, Ω)` triple with its numerical settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub demand: Demand,
    pub price: PriceFunction,
    pub set: FeasibleSet,
    pub tolerances: Tolerances,
    pub seed: u64,
}

impl Instance {
    fn certificate_options(&self, other: Option<&SolveResult>) -> CertificateOptions {
        CertificateOptions {
            probes: self.tolerances.certificate_probes,
            seed: self.seed,
            extra: other.map(|r| vec![r.policy.clone()]).unwrap_or_default(),
            project: self.tolerances.project_options(),
        }
    }

    fn nonlinear_step(&self) -> Option<StepDemand> {
        match self.demand {
            Demand::Step(s) if !self.set.has_structural() && !self.price.is_linear() => Some(s),
            _ => None,
        }
    }

    /// Solves for one battery. Linear prices use projections and carry a
    /// certificate residual; other prices need a step demand (decentralized)
    /// or a deterministic demand without structural limits (centralized).
    pub fn solve(&self, which: Battery) -> Result<SolveResult, SolveError> {
        let popts = self.tolerances.project_options();
        if self.price.is_linear() {
            let mut r = match which {
                Battery::Cb => solve_cb_linear(&self.demand, &self.price, &self.set, &popts)?,
                Battery::Dcb => solve_dcb_linear(&self.demand, &self.price, &self.set, &popts)?,
            };
            let res = certificate_linear(&r, &self.demand, &self.set, which, &self.certificate_options(None))?;
            r.certificate_residual = Some(res);
            return Ok(r);
        }
        match which {
            Battery::Cb => solve_cb_averaging(&self.demand, &self.price, &self.set),
            Battery::Dcb => match self.nonlinear_step() {
                Some(s) => solve_dcb_step(&s, &self.price, &self.tolerances.step_options()),
                None => Err(SolveError::Unsupported(format!(
                    "decentralized solve with a {} price needs a step demand without power, capacity or ramp limits",
                    self.price.kind()
                ))),
            },
        }
    }

    /// PoA of the instance. Linear solves are certified against each other.
    pub fn poa(&self) -> Result<PoaReport, PoaError> {
        if let Some(s) = self.nonlinear_step() {
            let mut rep = poa_step(&s, &self.price, &self.tolerances.step_options())?;
            if let Some(tol) = self.tolerances.poa {
                let wels: Vec<f64> = rep
                    .dcb
                    .near_optimal_set
                    .iter()
                    .map(|c| c.wel)
                    .chain([rep.dcb.wel])
                    .collect();
                rep.poa = compute_poa(rep.cb.wel, &wels, tol)?;
            }
            return Ok(rep);
        }
        let PriceFunction::Linear { a, b } = self.price else {
            return Err(SolveError::Unsupported(format!(
                "PoA with a {} price needs a step demand without power, capacity or ramp limits",
                self.price.kind()
            ))
            .into());
        };
        let mut rep = poa_linear(&self.demand, &self.set, a, b, &self.tolerances.project_options())?;
        let cb_res = certificate_linear(
            &rep.cb,
            &self.demand,
            &self.set,
            Battery::Cb,
            &self.certificate_options(Some(&rep.dcb)),
        )?;
        let dcb_res = certificate_linear(
            &rep.dcb,
            &self.demand,
            &self.set,
            Battery::Dcb,
            &self.certificate_options(Some(&rep.cb)),
        )?;
        rep.cb.certificate_residual = Some(cb_res);
        rep.dcb.certificate_residual = Some(dcb_res);
        let tol = self.tolerances.poa.unwrap_or_else(|| default_tol(rep.cb.wel));
        rep.poa = compute_poa(rep.cb.wel, &[rep.dcb.wel], tol)?;
        Ok(rep)
    }
}
