//! Seeded Gaussian-process demand `D = m + σ Z` around a daily sinusoid.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DemandError, DemandPath, TimeGrid};

/// Dense factorisation limit.
pub const MAX_GP_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpModel {
    pub base: f64,
    pub amplitude: f64,
    pub length_scale: f64,
    pub sigma_max: f64,
    pub jitter: f64,
}

impl Default for GpModel {
    fn default() -> Self {
        GpModel {
            base: 0.7,
            amplitude: 0.2,
            length_scale: 0.1,
            sigma_max: 0.08,
            jitter: 1e-6,
        }
    }
}

impl GpModel {
    pub fn with_length_scale(length_scale: f64) -> Self {
        GpModel {
            length_scale,
            ..Default::default()
        }
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.base + self.amplitude * (2.0 * std::f64::consts::PI * t).sin()
    }

    /// `min(σ_max, (1-m)/3, m/3)`, so the mean sits three deviations inside `[0, 1]`.
    pub fn sigma(&self, t: f64) -> f64 {
        let m = self.mean(t);
        self.sigma_max.min((1.0 - m) / 3.0).min(m / 3.0).max(0.0)
    }

    fn check(&self) -> Result<(), DemandError> {
        let bad = |m: String| Err(DemandError::Parameter(m));
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return bad(format!("length_scale must be > 0, got {}", self.length_scale));
        }
        if !(self.sigma_max.is_finite() && self.sigma_max >= 0.0) {
            return bad(format!("sigma_max must be >= 0, got {}", self.sigma_max));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return bad(format!("jitter must be >= 0, got {}", self.jitter));
        }
        let lo = self.base - self.amplitude.abs();
        let hi = self.base + self.amplitude.abs();
        if !(lo >= 0.0 && hi <= 1.0) {
            return bad(format!("mean trend leaves [0, 1]: range [{lo}, {hi}]"));
        }
        Ok(())
    }
}

/// A sampled path plus the number of nodes that had to be clipped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSample {
    pub path: DemandPath,
    pub clipped: usize,
}

/// Cholesky factor of the kernel matrix, reusable across seeds.
#[derive(Debug, Clone)]
pub struct GpSampler {
    model: GpModel,
    grid: TimeGrid,
    factor: DMatrix<f64>,
    mean: Vec<f64>,
    sigma: Vec<f64>,
}

impl GpSampler {
    pub fn new(model: GpModel, grid: TimeGrid) -> Result<Self, DemandError> {
        model.check()?;
        let n = grid.n;
        if n > MAX_GP_GRID {
            return Err(DemandError::Parameter(format!("GP grid n = {n} exceeds {MAX_GP_GRID}")));
        }
        let times = grid.times();
        let two_l2 = 2.0 * model.length_scale * model.length_scale;
        let kernel = DMatrix::from_fn(n, n, |i, j| {
            let d = times[i] - times[j];
            let k = (-d * d / two_l2).exp();
            if i == j {
                k + model.jitter
            } else {
                k
            }
        });
        let factor = kernel
            .cholesky()
            .ok_or(DemandError::Factorization {
                n,
                jitter: model.jitter,
            })?
            .unpack();
        Ok(GpSampler {
            model,
            grid,
            factor,
            mean: times.iter().map(|&t| model.mean(t)).collect(),
            sigma: times.iter().map(|&t| model.sigma(t)).collect(),
        })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sample(&self, seed: u64) -> GpSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.grid.n;
        let white = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let z = &self.factor * white;
        let mut clipped = 0;
        let values = (0..n)
            .map(|i| {
                let d = self.mean[i] + self.sigma[i] * z[i];
                if (0.0..=1.0).contains(&d) {
                    d
                } else {
                    clipped += 1;
                    d.clamp(0.0, 1.0)
                }
            })
            .collect();
        GpSample {
            path: DemandPath::unit(values).expect("clipped values lie in [0, 1]"),
            clipped,
        }
    }
}

/// One path from `model` on `grid`.
pub fn sample_gp_path(model: GpModel, grid: TimeGrid, seed: u64) -> Result<GpSample, DemandError> {
    Ok(GpSampler::new(model, grid)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag1(values: &[f64], mean: &[f64], sigma: &[f64]) -> f64 {
        let z: Vec<f64> = values
            .iter()
            .zip(mean)
            .zip(sigma)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let num: f64 = z.windows(2).map(|w| w[0] * w[1]).sum();
        let den: f64 = z.iter().map(|v| v * v).sum();
        num / den
    }

    #[test]
    fn deterministic_for_seed() {
        let grid = TimeGrid::new(96).unwrap();
        let a = sample_gp_path(GpModel::default(), grid, 7).unwrap();
        let b = sample_gp_path(GpModel::default(), grid, 7).unwrap();
        let c = sample_gp_path(GpModel::default(), grid, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.path, c.path);
        assert!(a.path.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn sigma_keeps_three_deviations_inside() {
        let m = GpModel::default();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let (mu, s) = (m.mean(t), m.sigma(t));
            assert!(s <= 0.08 && mu - 3.0 * s >= -1e-15 && mu + 3.0 * s <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn sample_mean_within_clt_band() {
        let grid = TimeGrid::new(48).unwrap();
        let sampler = GpSampler::new(GpModel::default(), grid).unwrap();
        let k = 1000;
        let mut sums = vec![0.0; grid.n];
        for seed in 0..k {
            for (s, v) in sums.iter_mut().zip(sampler.sample(seed).path.values()) {
                *s += v;
            }
        }
        for i in 0..grid.n {
            let mean = sums[i] / k as f64;
            let band = 4.0 * sampler.sigma()[i] / (k as f64).sqrt();
            assert!((mean - sampler.mean()[i]).abs() <= band, "node {i}");
        }
    }

    #[test]
    fn autocorrelation_grows_with_length_scale() {
        let grid = TimeGrid::new(64).unwrap();
        let mut last = -1.0;
        for &l in &[0.02, 0.1, 0.5] {
            let sampler = GpSampler::new(GpModel::with_length_scale(l), grid).unwrap();
            let mut acc = 0.0;
            for seed in 0..500 {
                let s = sampler.sample(seed);
                acc += lag1(s.path.values(), sampler.mean(), sampler.sigma());
            }
            let r = acc / 500.0;
            assert!(r > last, "l = {l}: {r} <= {last}");
            last = r;
        }
    }

    #[test]
    fn tiny_jitter_failure_is_reported() {
        let mut m = GpModel::with_length_scale(0.5);
        m.jitter = 0.0;
        match GpSampler::new(m, TimeGrid::new(400).unwrap()) {
            Err(DemandError::Factorization { .. }) | Ok(_) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
        assert!(GpSampler::new(GpModel::default(), TimeGrid::new(5000).unwrap()).is_err());
    }
}
