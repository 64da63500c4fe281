//! Bernstein operator `B_n f(x) = sum_k f(k/n) C(n,k) x^k (1-x)^(n-k)` and the
//! convex polynomial lift of the counterexample price.
//!
//! Evaluation never expands into the monomial basis. Small degrees use de
//! Casteljau; large degrees sum the binomial weights outward from their mode,
//! which keeps every step a convex combination and skips the negligible tails.

use std::sync::OnceLock;

use num_bigint::{BigInt, Sign};
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prices::{PriceError, PriceFunction};

/// Degrees up to this use the O(n^2) de Casteljau recurrence.
const DE_CASTELJAU_MAX: usize = 64;
/// Binomial weights below this fraction of the modal weight are dropped.
const WEIGHT_CUTOFF: f64 = 1e-20;
/// Largest degree for which a monomial-basis form is produced.
pub const MONOMIAL_MAX_DEGREE: usize = 256;
/// Points of the uniform grid on `[0, 1]` used for sup-gap measurements.
pub const GAP_GRID: usize = 10_000;
/// Default cap on the degree searched by [`lift_price`].
pub const DEFAULT_MAX_LIFT_DEGREE: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BernsteinError {
    #[error("x = {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid Bernstein data: {0}")]
    Invalid(String),
    #[error("monomial conversion supports degree <= {MONOMIAL_MAX_DEGREE}, got {0}")]
    DegreeTooLarge(usize),
    #[error("sup-gap {gap:.3e} still above target {target:.3e} at degree {degree} (cap {cap})")]
    NotConverged {
        degree: usize,
        gap: f64,
        target: f64,
        cap: usize,
    },
    #[error(transparent)]
    Price(#[from] PriceError),
}

/// A polynomial in Bernstein form: `coeffs[k] = f(k/n)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "BernsteinSpec", into = "BernsteinSpec")]
pub struct BernsteinPoly {
    coeffs: Vec<f64>,
    source: String,
    delta: Option<f64>,
    antiderivative: OnceLock<Vec<f64>>,
}

impl PartialEq for BernsteinPoly {
    fn eq(&self, other: &Self) -> bool {
        self.coeffs == other.coeffs && self.source == other.source && self.delta == other.delta
    }
}

/// Serialized shape: `{"n": .., "coeffs": [..], "source": .., "delta": ..}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BernsteinSpec {
    n: usize,
    coeffs: Vec<f64>,
    source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

impl TryFrom<BernsteinSpec> for BernsteinPoly {
    type Error = BernsteinError;

    fn try_from(spec: BernsteinSpec) -> Result<Self, Self::Error> {
        if spec.coeffs.len() != spec.n + 1 {
            return Err(BernsteinError::Invalid(format!(
                "degree {} needs {} coefficients, got {}",
                spec.n,
                spec.n + 1,
                spec.coeffs.len()
            )));
        }
        let mut poly = BernsteinPoly::new(spec.coeffs, spec.source)?;
        poly.delta = spec.delta;
        Ok(poly)
    }
}

impl From<BernsteinPoly> for BernsteinSpec {
    fn from(p: BernsteinPoly) -> Self {
        BernsteinSpec {
            n: p.degree(),
            coeffs: p.coeffs,
            source: p.source,
            delta: p.delta,
        }
    }
}

impl BernsteinPoly {
    pub fn new(coeffs: Vec<f64>, source: impl Into<String>) -> Result<Self, BernsteinError> {
        if coeffs.is_empty() {
            return Err(BernsteinError::Invalid("no coefficients".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(BernsteinError::Invalid("non-finite coefficient".into()));
        }
        Ok(BernsteinPoly {
            coeffs,
            source: source.into(),
            delta: None,
            antiderivative: OnceLock::new(),
        })
    }

    /// `B_n f` for a function sampled at `k/n`.
    pub fn from_fn(f: impl Fn(f64) -> f64 + Sync, n: usize, source: impl Into<String>) -> Result<Self, BernsteinError> {
        if n == 0 {
            return Err(BernsteinError::Invalid("degree must be positive".into()));
        }
        let coeffs: Vec<f64> = (0..=n).into_par_iter().map(|k| f(k as f64 / n as f64)).collect();
        Self::new(coeffs, source)
    }

    /// Bernstein approximation of a price curve on `[0, 1]`.
    pub fn from_price(price: &PriceFunction, n: usize) -> Result<Self, BernsteinError> {
        // Surface domain errors before sampling.
        price.price(0.0)?;
        price.price(1.0)?;
        let mut poly = Self::from_fn(|z| price.price(z).unwrap_or(f64::NAN), n, price.kind())?;
        if let PriceFunction::Counterexample { delta } = price {
            poly.delta = Some(*delta);
        }
        Ok(poly)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn eval(&self, x: f64) -> Result<f64, BernsteinError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(BernsteinError::Domain(x));
        }
        Ok(eval_bernstein(&self.coeffs, x))
    }

    pub(crate) fn eval_clamped(&self, x: f64) -> f64 {
        eval_bernstein(&self.coeffs, x.clamp(0.0, 1.0))
    }

    /// `∫_0^x` of the polynomial. The antiderivative of a degree-n Bernstein
    /// polynomial is the degree-(n+1) one with coefficients
    /// `C_j = (1/(n+1)) sum_{k<j} c_k`.
    pub fn integral(&self, x: f64) -> Result<f64, BernsteinError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(BernsteinError::Domain(x));
        }
        Ok(self.integral_clamped(x))
    }

    pub(crate) fn integral_clamped(&self, x: f64) -> f64 {
        let anti = self.antiderivative.get_or_init(|| {
            let scale = 1.0 / self.coeffs.len() as f64;
            let mut out = Vec::with_capacity(self.coeffs.len() + 1);
            out.push(0.0);
            let mut acc = 0.0;
            for c in &self.coeffs {
                acc += c;
                out.push(acc * scale);
            }
            out
        });
        eval_bernstein(anti, x.clamp(0.0, 1.0))
    }

    /// Converts to monomial coefficients `a_j` with `p(x) = sum a_j x^j`.
    ///
    /// `a_j = C(n,j) Δ^j c_0` is evaluated exactly in integer arithmetic and
    /// rounded once at the end.
    pub fn to_monomial(&self) -> Result<MonomialForm, BernsteinError> {
        let n = self.degree();
        if n > MONOMIAL_MAX_DEGREE {
            return Err(BernsteinError::DegreeTooLarge(n));
        }
        let (ints, exp) = exact_scaled(&self.coeffs);
        let mut row = ints;
        let mut binom = BigInt::from(1u32);
        let mut coeffs = Vec::with_capacity(n + 1);
        for j in 0..=n {
            coeffs.push(big_to_f64(&(&binom * &row[0]), exp));
            if j < n {
                row = row.windows(2).map(|w| &w[1] - &w[0]).collect();
                binom = binom * BigInt::from(n - j) / BigInt::from(j + 1);
            }
        }
        let condition = f64::EPSILON * coeffs.iter().map(|a| a.abs()).sum::<f64>();
        Ok(MonomialForm { coeffs, condition })
    }

    /// Largest `|p(x) - f(x)|` over the `GAP_GRID`-point grid, with its location.
    pub fn sup_gap(&self, f: impl Fn(f64) -> f64 + Sync) -> (f64, f64) {
        (0..GAP_GRID)
            .into_par_iter()
            .map(|i| {
                let x = grid_point(i);
                ((eval_bernstein(&self.coeffs, x) - f(x)).abs(), x)
            })
            .reduce(|| (0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

/// Monomial coefficients plus a forward-error estimate for Horner evaluation
/// on `[0, 1]` (`eps * sum |a_j|`).
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialForm {
    pub coeffs: Vec<f64>,
    pub condition: f64,
}

pub fn grid_point(i: usize) -> f64 {
    i as f64 / (GAP_GRID - 1) as f64
}

/// Evaluates `sum_k c_k C(n,k) x^k (1-x)^(n-k)`.
pub fn eval_bernstein(coeffs: &[f64], x: f64) -> f64 {
    let n = coeffs.len() - 1;
    if n == 0 || x <= 0.0 {
        return coeffs[0];
    }
    if x >= 1.0 {
        return coeffs[n];
    }
    if n <= DE_CASTELJAU_MAX {
        de_casteljau(coeffs, x)
    } else {
        modal_sum(coeffs, x)
    }
}

fn de_casteljau(coeffs: &[f64], x: f64) -> f64 {
    let mut b = coeffs.to_vec();
    let y = 1.0 - x;
    for r in 1..b.len() {
        for i in 0..b.len() - r {
            b[i] = y * b[i] + x * b[i + 1];
        }
    }
    b[0]
}

/// Weights relative to the binomial mode, walked outward until negligible,
/// then normalised. Never forms `(1-x)^n`, which underflows for large n.
fn modal_sum(coeffs: &[f64], x: f64) -> f64 {
    let n = coeffs.len() - 1;
    let nf = n as f64;
    let ratio = x / (1.0 - x);
    let mode = (((nf + 1.0) * x).floor() as usize).min(n);

    let mut num = coeffs[mode];
    let mut den = 1.0;

    let mut w = 1.0;
    for k in mode..n {
        // w_{k+1} / w_k = (n-k)/(k+1) * x/(1-x)
        w *= (nf - k as f64) / (k as f64 + 1.0) * ratio;
        if w < WEIGHT_CUTOFF {
            break;
        }
        num += w * coeffs[k + 1];
        den += w;
    }
    let mut w = 1.0;
    for k in (1..=mode).rev() {
        // w_{k-1} / w_k = k/(n-k+1) * (1-x)/x
        w *= k as f64 / (nf - k as f64 + 1.0) / ratio;
        if w < WEIGHT_CUTOFF {
            break;
        }
        num += w * coeffs[k - 1];
        den += w;
    }
    num / den
}

/// Exact integers `m_i` and a shared exponent `e` with `c_i = m_i * 2^e`.
fn exact_scaled(values: &[f64]) -> (Vec<BigInt>, i32) {
    let parts: Vec<(i64, i32)> = values.iter().map(|&v| decompose(v)).collect();
    let exp = parts
        .iter()
        .filter(|(m, _)| *m != 0)
        .map(|(_, e)| *e)
        .min()
        .unwrap_or(0);
    let ints = parts
        .iter()
        .map(|&(m, e)| {
            if m == 0 {
                BigInt::zero()
            } else {
                BigInt::from(m) << ((e - exp) as usize)
            }
        })
        .collect();
    (ints, exp)
}

/// `v = m * 2^e` exactly.
fn decompose(v: f64) -> (i64, i32) {
    if v == 0.0 {
        return (0, 0);
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 0 { 1 } else { -1 };
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (mantissa, exp) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1i64 << 52), raw_exp - 1075)
    };
    (sign * mantissa, exp)
}

/// `big * 2^exp` rounded to f64.
fn big_to_f64(big: &BigInt, exp: i32) -> f64 {
    if big.is_zero() {
        return 0.0;
    }
    let bits = big.bits() as i64;
    let shift = (bits - 62).max(0);
    let top = if big.sign() == Sign::Minus {
        -((-big) >> (shift as usize))
    } else {
        big >> (shift as usize)
    };
    let mant = top.to_f64().unwrap_or(0.0);
    ldexp(mant, shift + i64::from(exp))
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Output of [`lift_price`].
#[derive(Debug, Clone)]
pub struct LiftedPrice {
    /// `Polynomial` when a well-conditioned monomial form exists, else `Bernstein`.
    pub price: PriceFunction,
    pub degree: usize,
    /// Measured sup-gap `max |B_n P - P|` on the `GAP_GRID` grid.
    pub gap: f64,
    pub grid_points: usize,
}

impl LiftedPrice {
    /// The Bernstein form of the lift regardless of which variant `price` holds.
    pub fn bernstein(&self, source: &PriceFunction) -> Result<BernsteinPoly, BernsteinError> {
        match &self.price {
            PriceFunction::Bernstein(p) => Ok(p.clone()),
            _ => BernsteinPoly::from_price(source, self.degree),
        }
    }
}

/// Doubles the degree from 8 until the grid sup-gap to `price` is at most
/// `eps_target`.
pub fn lift_price(price: &PriceFunction, eps_target: f64, max_degree: usize) -> Result<LiftedPrice, BernsteinError> {
    if !(eps_target.is_finite() && eps_target > 0.0) {
        return Err(BernsteinError::Invalid(format!(
            "eps_target must be positive, got {eps_target}"
        )));
    }
    if let PriceFunction::Counterexample { delta } = price {
        if eps_target > *delta {
            return Err(BernsteinError::Invalid(format!(
                "eps_target {eps_target} must not exceed delta {delta}"
            )));
        }
    }
    price.check_params()?;

    let f = |z: f64| price.price(z).unwrap_or(f64::NAN);
    let mut n = 8;
    loop {
        let poly = BernsteinPoly::from_price(price, n)?;
        let (gap, _) = poly.sup_gap(f);
        if gap <= eps_target {
            let monomial = if n <= MONOMIAL_MAX_DEGREE {
                poly.to_monomial().ok().filter(|m| m.condition <= 1e-9)
            } else {
                None
            };
            let lifted = match monomial {
                Some(m) => PriceFunction::Polynomial { coeffs: m.coeffs },
                None => PriceFunction::Bernstein(poly),
            };
            return Ok(LiftedPrice {
                price: lifted,
                degree: n,
                gap,
                grid_points: GAP_GRID,
            });
        }
        if n * 2 > max_degree {
            return Err(BernsteinError::NotConverged {
                degree: n,
                gap,
                target: eps_target,
                cap: max_degree,
            });
        }
        n *= 2;
    }
}

/// Closed-form PoA lower bound for the lifted counterexample,
/// `(1/2 - ln 2δ - 2δ) / (3/2 + ln 2 - 2δ)`.
pub fn corollary_bound(delta: f64) -> Result<f64, BernsteinError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(BernsteinError::Invalid(format!(
            "delta must lie in (0, 1/2), got {delta}"
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    Ok((0.5 - (2.0 * delta).ln() - 2.0 * delta) / (1.5 + ln2 - 2.0 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_direct(coeffs: &[f64], x: f64) -> f64 {
        // log-space weights as an independent reference
        let n = coeffs.len() - 1;
        let lg = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let lw = lg(n) - lg(k) - lg(n - k) + k as f64 * x.ln() + (n - k) as f64 * (1.0 - x).ln();
                c * lw.exp()
            })
            .sum()
    }

    #[test]
    fn reproduces_linear_functions() {
        for &n in &[1usize, 7, 64, 65, 1000, 1 << 14] {
            let p = BernsteinPoly::from_fn(|x| x, n, "identity").unwrap();
            for &x in &[0.0, 1e-6, 0.13, 0.5, 0.77, 1.0 - 1e-9, 1.0] {
                assert!((p.eval(x).unwrap() - x).abs() < 1e-12, "n={n} x={x}");
            }
            let q = BernsteinPoly::from_fn(|x| 3.0 - 2.0 * x, n, "affine").unwrap();
            assert!((q.eval(0.3).unwrap() - 2.4).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints_interpolate() {
        let p = BernsteinPoly::new(vec![1.5, -2.0, 7.0, 4.25], "t").unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 1.5);
        assert_eq!(p.eval(1.0).unwrap(), 4.25);
        assert!(p.eval(1.5).is_err());
    }

    #[test]
    fn modal_sum_agrees_with_de_casteljau_and_log_weights() {
        let coeffs: Vec<f64> = (0..=200).map(|k| ((k as f64) * 0.37).sin() + 2.0).collect();
        for &x in &[0.01, 0.2, 0.5, 0.93, 0.999] {
            let a = de_casteljau(&coeffs, x);
            let b = modal_sum(&coeffs, x);
            let c = binomial_direct(&coeffs, x);
            assert!((a - b).abs() < 1e-12, "x={x}: {a} vs {b}");
            assert!((a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn integral_matches_quadrature() {
        let p = BernsteinPoly::from_fn(|x| 2.0 + x * x * 5.0, 300, "t").unwrap();
        let m = 20_000;
        let h = 0.8 / m as f64;
        let mut s = p.eval(0.0).unwrap() + p.eval(0.8).unwrap();
        for i in 1..m {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * p.eval(i as f64 * h).unwrap();
        }
        let q = s * h / 3.0;
        assert!((p.integral(0.8).unwrap() - q).abs() < 1e-10);
    }

    #[test]
    fn monomial_round_trip_low_degree_sources() {
        for &n in &[4usize, 16, 64, 128, 256] {
            let p = BernsteinPoly::from_fn(|x| x * x * x - 0.5 * x + 1.0, n, "cubic").unwrap();
            let m = p.to_monomial().unwrap();
            assert!(m.condition < 1e-12);
            for i in 0..100 {
                let x = (i as f64 * 0.6180339887).fract();
                let h = m.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                assert!((h - p.eval(x).unwrap()).abs() < 1e-7, "n={n} x={x}");
            }
        }
        let big = BernsteinPoly::from_fn(|x| x, 257, "t").unwrap();
        assert!(matches!(big.to_monomial(), Err(BernsteinError::DegreeTooLarge(257))));
    }

    #[test]
    fn monomial_of_known_polynomial() {
        // B_n(x^2) = x^2 + x(1-x)/n
        let n = 10;
        let m = BernsteinPoly::from_fn(|x| x * x, n, "sq")
            .unwrap()
            .to_monomial()
            .unwrap();
        let expect = [0.0, 0.1, 0.9];
        for (j, a) in m.coeffs.iter().enumerate() {
            let e = expect.get(j).copied().unwrap_or(0.0);
            // samples (k/n)^2 are rounded, so higher terms are only ~1e-14
            assert!((a - e).abs() < 1e-12, "a_{j} = {a}");
        }
    }

    #[test]
    fn counterexample_small_lift_is_above_and_shrinking() {
        let price = PriceFunction::counterexample(0.1).unwrap();
        let f = |x: f64| price.price(x).unwrap();
        let mut last = f64::INFINITY;
        for &n in &[8usize, 16, 32, 64, 128] {
            let p = BernsteinPoly::from_price(&price, n).unwrap();
            let (gap, _) = p.sup_gap(f);
            assert!(gap <= last + 1e-12);
            last = gap;
            for i in (0..GAP_GRID).step_by(37) {
                let x = grid_point(i);
                assert!(p.eval(x).unwrap() >= f(x) - 1e-9);
            }
        }
        let p64 = BernsteinPoly::from_price(&price, 64).unwrap();
        let v = p64.eval(0.3).unwrap();
        let (gap, _) = p64.sup_gap(f);
        assert!(v >= 2.0 && v <= 2.0 + gap);
    }

    #[test]
    fn lift_at_coarse_target() {
        let price = PriceFunction::counterexample(0.1).unwrap();
        let lifted = lift_price(&price, 0.1, DEFAULT_MAX_LIFT_DEGREE).unwrap();
        assert!(lifted.gap <= 0.1);
        assert_eq!(lifted.degree, 1024);
        assert!(matches!(lifted.price, PriceFunction::Bernstein(_)));
        assert!(lifted.price.validate().is_valid());
        // and the cap is honoured
        let err = lift_price(&price, 0.1, 512).unwrap_err();
        assert!(matches!(err, BernsteinError::NotConverged { degree: 512, .. }));
        assert!(lift_price(&price, 0.2, 1 << 10).is_err());
    }

    #[test]
    fn small_lift_converts_to_valid_polynomial() {
        let price = PriceFunction::counterexample(0.1).unwrap();
        let p = BernsteinPoly::from_price(&price, 16).unwrap();
        let m = p.to_monomial().unwrap();
        assert!(m.condition < 1e-9);
        let poly = PriceFunction::polynomial(m.coeffs).unwrap();
        assert!(poly.validate().is_valid());
    }

    #[test]
    fn corollary_bound_values() {
        let ln2 = std::f64::consts::LN_2;
        let b = corollary_bound(0.1).unwrap();
        let expect = (0.5 - 0.2_f64.ln() - 0.2) / (1.5 + ln2 - 0.2);
        assert!((b - expect).abs() < 1e-15);
        assert!((b - 0.958).abs() < 1e-3);
        assert!((corollary_bound(0.01).unwrap() - 2.021).abs() < 1e-3);
        let mut prev = 0.0;
        for k in 3..12 {
            let v = corollary_bound(10f64.powi(-k)).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(corollary_bound(0.0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let mut p = BernsteinPoly::new(vec![2.0, 2.0, 3.5], "counterexample").unwrap();
        p.delta = Some(0.1);
        let price = PriceFunction::Bernstein(p);
        let s = serde_json::to_string(&price).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"bernstein","n":2,"coeffs":[2.0,2.0,3.5],"source":"counterexample","delta":0.1}"#
        );
        let back: PriceFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, price);
        let bad = r#"{"kind":"bernstein","n":3,"coeffs":[1.0],"source":"x"}"#;
        assert!(serde_json::from_str::<PriceFunction>(bad).is_err());
    }
}
