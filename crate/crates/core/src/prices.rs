//! Increasing price functions on net demand and their generation-cost integrals.
//!
//! Every variant carries an exact antiderivative, so `cost` never goes through
//! quadrature. Net demand is normalised; the counterexample and polynomial
//! variants live on `[0, 1]`, linear and monomial prices extend to any
//! nonnegative demand.

use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinPoly;

/// Net demand may leave the domain by this much before it is a domain error.
/// Projections stop at a finite tolerance, so exact boundary hits come back
/// as `1 + 1e-12` and similar.
pub const DOMAIN_SLACK: f64 = 1e-9;

/// Number of grid points used by [`PriceFunction::validate`].
pub const VALIDATION_GRID: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PriceError {
    #[error("net demand {z} outside the price domain [{lo}, {hi}]")]
    Domain { z: f64, lo: f64, hi: f64 },
    #[error("invalid price parameter: {0}")]
    Parameter(String),
}

/// A market-clearing price curve `P(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriceFunction {
    /// `P(z) = a z + b`
    Linear { a: f64, b: f64 },
    /// `P(z) = alpha z^d`
    Monomial { alpha: f64, d: u32 },
    /// Convex piecewise curve with a `1/(1-z)` branch that is linearised in the
    /// last `delta` of the domain.
    #[serde(rename = "counterexample")]
    Counterexample { delta: f64 },
    /// `P(z) = sum_k coeffs[k] z^k`
    Polynomial { coeffs: Vec<f64> },
    /// Polynomial kept in Bernstein form (large degrees).
    Bernstein(BernsteinPoly),
}

impl PriceFunction {
    pub fn linear(a: f64, b: f64) -> Result<Self, PriceError> {
        let p = PriceFunction::Linear { a, b };
        p.check_params()?;
        Ok(p)
    }

    pub fn monomial(alpha: f64, d: u32) -> Result<Self, PriceError> {
        let p = PriceFunction::Monomial { alpha, d };
        p.check_params()?;
        Ok(p)
    }

    pub fn counterexample(delta: f64) -> Result<Self, PriceError> {
        let p = PriceFunction::Counterexample { delta };
        p.check_params()?;
        Ok(p)
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self, PriceError> {
        let p = PriceFunction::Polynomial { coeffs };
        p.check_params()?;
        Ok(p)
    }

    /// Checks the variant's parameter ranges. Shape properties of polynomials
    /// are left to [`validate`](Self::validate).
    pub fn check_params(&self) -> Result<(), PriceError> {
        let bad = |msg: String| Err(PriceError::Parameter(msg));
        match self {
            PriceFunction::Linear { a, b } => {
                if !(a.is_finite() && *a > 0.0) {
                    return bad(format!("linear slope a must be > 0, got {a}"));
                }
                if !(b.is_finite() && *b >= 0.0) {
                    return bad(format!("linear intercept b must be >= 0, got {b}"));
                }
            }
            PriceFunction::Monomial { alpha, d } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return bad(format!("monomial scale alpha must be > 0, got {alpha}"));
                }
                if *d == 0 {
                    return bad("monomial degree d must be a positive integer".into());
                }
            }
            PriceFunction::Counterexample { delta } => {
                if !(delta.is_finite() && *delta > 0.0 && *delta < 0.5) {
                    return bad(format!("counterexample delta must lie in (0, 1/2), got {delta}"));
                }
            }
            PriceFunction::Polynomial { coeffs } => {
                if coeffs.is_empty() {
                    return bad("polynomial needs at least one coefficient".into());
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return bad("polynomial coefficients must be finite".into());
                }
            }
            PriceFunction::Bernstein(_) => {}
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PriceFunction::Linear { .. } => "linear",
            PriceFunction::Monomial { .. } => "monomial",
            PriceFunction::Counterexample { .. } => "counterexample",
            PriceFunction::Polynomial { .. } => "polynomial",
            PriceFunction::Bernstein(_) => "bernstein",
        }
    }

    /// Upper end of the valid net-demand range; the lower end is always 0.
    pub fn domain_upper(&self) -> f64 {
        match self {
            PriceFunction::Linear { .. } | PriceFunction::Monomial { .. } => f64::INFINITY,
            _ => 1.0,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, PriceFunction::Linear { .. })
    }

    fn admit(&self, z: f64) -> Result<f64, PriceError> {
        let hi = self.domain_upper();
        if !z.is_finite() || z < -DOMAIN_SLACK || z > hi + DOMAIN_SLACK {
            return Err(PriceError::Domain { z, lo: 0.0, hi });
        }
        Ok(z.clamp(0.0, hi))
    }

    /// `P(z)`.
    pub fn price(&self, z: f64) -> Result<f64, PriceError> {
        let z = self.admit(z)?;
        Ok(match self {
            PriceFunction::Linear { a, b } => a * z + b,
            PriceFunction::Monomial { alpha, d } => alpha * z.powi(*d as i32),
            PriceFunction::Counterexample { delta } => counterexample_price(*delta, z),
            PriceFunction::Polynomial { coeffs } => horner(coeffs, z),
            PriceFunction::Bernstein(poly) => poly.eval_clamped(z),
        })
    }

    /// Generation cost `G(z) = ∫_0^z P`.
    pub fn cost(&self, z: f64) -> Result<f64, PriceError> {
        let z = self.admit(z)?;
        Ok(match self {
            PriceFunction::Linear { a, b } => 0.5 * a * z * z + b * z,
            PriceFunction::Monomial { alpha, d } => alpha * z.powi(*d as i32 + 1) / f64::from(*d + 1),
            PriceFunction::Counterexample { delta } => counterexample_cost(*delta, z),
            PriceFunction::Polynomial { coeffs } => {
                // ∫ sum c_k z^k = z * sum c_k/(k+1) z^k
                let integrated: Vec<f64> = coeffs.iter().enumerate().map(|(k, c)| c / (k as f64 + 1.0)).collect();
                z * horner(&integrated, z)
            }
            PriceFunction::Bernstein(poly) => poly.integral_clamped(z),
        })
    }

    /// `G(upper) - G(lower)`, factored where a closed form allows it so that
    /// small welfare differences do not cancel.
    pub fn cost_difference(&self, upper: f64, lower: f64) -> Result<f64, PriceError> {
        self.cost_drop(upper, lower, upper - lower)
    }

    /// `G(demand) - G(demand - battery)`. The battery amount is used as the
    /// exact gap, which keeps tiny dispatches accurate next to large demand.
    pub fn cost_saving(&self, demand: f64, battery: f64) -> Result<f64, PriceError> {
        self.cost_drop(demand, demand - battery, battery)
    }

    fn cost_drop(&self, upper: f64, lower: f64, gap: f64) -> Result<f64, PriceError> {
        match self {
            PriceFunction::Linear { a, b } => {
                let u = self.admit(upper)?;
                let l = self.admit(lower)?;
                Ok(gap * (0.5 * a * (u + l) + b))
            }
            PriceFunction::Monomial { alpha, d } => {
                let u = self.admit(upper)?;
                let l = self.admit(lower)?;
                // u^{d+1} - l^{d+1} = (u - l) * sum_{j=0}^{d} u^j l^{d-j}
                let mut sum = 0.0;
                let mut up = 1.0;
                for j in 0..=*d {
                    sum += up * l.powi((*d - j) as i32);
                    up *= u;
                }
                Ok(alpha * gap * sum / f64::from(*d + 1))
            }
            _ => Ok(self.cost(upper)? - self.cost(lower)?),
        }
    }

    /// Grid check of nonnegativity, monotonicity and convexity on `[0, 1]`.
    pub fn validate(&self) -> ValidityReport {
        self.validate_on(VALIDATION_GRID)
    }

    pub fn validate_on(&self, points: usize) -> ValidityReport {
        let points = points.max(3);
        let zs: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
        let values: Vec<f64> = zs.iter().map(|&z| self.price(z).unwrap_or(f64::NAN)).collect();
        let scale = values
            .iter()
            .fold(1.0_f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { m });
        // Evaluation noise of the Bernstein sum is ~1e-12 relative.
        let tol = 1e-10 * scale;

        let mut report = ValidityReport {
            grid_points: points,
            nonnegative: true,
            increasing: true,
            convex: true,
            first_violation: None,
        };
        let note = |report: &mut ValidityReport, kind: ViolationKind, z: f64, amount: f64| {
            if report.first_violation.is_none() {
                report.first_violation = Some(Violation { kind, z, amount });
            }
        };

        for (i, (&z, &v)) in zs.iter().zip(&values).enumerate() {
            if !v.is_finite() {
                report.nonnegative = false;
                note(&mut report, ViolationKind::NotFinite, z, f64::NAN);
                continue;
            }
            if v < -tol {
                report.nonnegative = false;
                note(&mut report, ViolationKind::Negative, z, -v);
            }
            if i >= 1 {
                let step = v - values[i - 1];
                if step < -tol {
                    report.increasing = false;
                    note(&mut report, ViolationKind::Decreasing, z, -step);
                }
            }
            if i >= 2 {
                let second = v - 2.0 * values[i - 1] + values[i - 2];
                if second < -tol {
                    report.convex = false;
                    note(&mut report, ViolationKind::Concave, zs[i - 1], -second);
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NotFinite,
    Negative,
    Decreasing,
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub z: f64,
    pub amount: f64,
}

/// Result of [`PriceFunction::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub grid_points: usize,
    pub nonnegative: bool,
    pub increasing: bool,
    pub convex: bool,
    pub first_violation: Option<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.nonnegative && self.increasing && self.convex
    }
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

fn counterexample_price(delta: f64, z: f64) -> f64 {
    if z <= 0.5 {
        2.0
    } else if z <= 1.0 - delta {
        1.0 / (1.0 - z)
    } else {
        (z - 1.0 + delta) / (delta * delta) + 1.0 / delta
    }
}

fn counterexample_cost(delta: f64, z: f64) -> f64 {
    if z <= 0.5 {
        2.0 * z
    } else if z <= 1.0 - delta {
        -(-z).ln_1p() + 0.5_f64.ln() + 1.0
    } else {
        let s = z - 1.0 + delta;
        s * s / (2.0 * delta * delta) + s / delta - (2.0 * delta).ln() + 1.0
    }
}
