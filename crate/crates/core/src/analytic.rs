//! Closed-form score of a Gaussian-smoothed empirical point distribution.
//!
//! For support points `x_1..x_m` and bandwidth `sigma` the smoothed density is
//! the mixture `A(x) = (1/m) sum_i N(x; x_i, sigma^2 I)`. Its score is
//! `(sum_i w_i(x) x_i - x) / sigma^2`, where the weights are a softmax of
//! `-|x - x_i|^2 / (2 sigma^2)`. Everything here is evaluated exactly in
//! O(m) per query with log-sum-exp stabilization.

use rand::Rng as _;

use crate::cloud::{squared_distance, PointCloud};
use crate::field::{norm, ScoreField};
use crate::rng;

/// Extra distance, in units of sigma, beyond the nearest support point after
/// which components are dropped when a cutoff is enabled. Each dropped term
/// has relative weight below `exp(-72)`.
pub const CUTOFF_SIGMAS: f64 = 12.0;

#[derive(Debug, Clone)]
pub struct GmmField {
    support: PointCloud,
    cutoff: bool,
}

impl GmmField {
    pub fn new(support: PointCloud) -> Self {
        Self {
            support,
            cutoff: false,
        }
    }

    /// Drops components farther than the nearest one by more than
    /// `CUTOFF_SIGMAS * sigma`. Each dropped term changes the mixture by a
    /// relative amount below `exp(-72)`.
    pub fn with_cutoff(mut self, enabled: bool) -> Self {
        self.cutoff = enabled;
        self
    }

    pub fn support(&self) -> &PointCloud {
        &self.support
    }

    /// Exponents `-|x - x_i|^2 / (2 sigma^2)` and their maximum.
    fn exponents(&self, x: &[f64], sigma: f64) -> (Vec<f64>, f64) {
        let inv = -0.5 / (sigma * sigma);
        let exps: Vec<f64> = self
            .support
            .iter()
            .map(|p| squared_distance(x, p) * inv)
            .collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = if self.cutoff {
            // d_i > d_min + c*sigma  <=>  sqrt(-2 e_i) > sqrt(-2 e_max) + c
            let limit = (-2.0 * max).sqrt() + CUTOFF_SIGMAS;
            exps.into_iter()
                .map(|e| {
                    if (-2.0 * e).sqrt() > limit {
                        f64::NEG_INFINITY
                    } else {
                        e
                    }
                })
                .collect()
        } else {
            exps
        };
        (exps, max)
    }

    /// `log A(x)`.
    pub fn log_density(&self, x: &[f64], sigma: f64) -> f64 {
        let (exps, max) = self.exponents(x, sigma);
        let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
        let m = self.support.len() as f64;
        let d = self.support.dim() as f64;
        max + sum.ln() - m.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
    }

    /// Softmax weights of the mixture components at `x`.
    pub fn weights(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let (exps, max) = self.exponents(x, sigma);
        let mut w: Vec<f64> = exps.iter().map(|e| (e - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    /// `sum_i w_i(x) x_i - x`, accumulated as a weighted sum of offsets so
    /// the cancellation near support points is exact.
    pub fn mean_shift(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        let (exps, max) = self.exponents(x, sigma);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (p, e) in self.support.iter().zip(&exps) {
            let w = (e - max).exp();
            if w == 0.0 {
                continue;
            }
            total += w;
            for k in 0..out.len() {
                out[k] += w * (p[k] - x[k]);
            }
        }
        out.iter_mut().for_each(|v| *v /= total);
    }

    /// `sigma^2 |score|`, an approximate distance to the nearest support
    /// point when sigma is small relative to the point spacing.
    pub fn distance_estimate(&self, x: &[f64], sigma: f64) -> f64 {
        let mut shift = vec![0.0; self.support.dim()];
        self.mean_shift(x, sigma, &mut shift);
        norm(&shift)
    }

    /// `n` draws from the smoothed distribution: a uniformly chosen support
    /// point plus `N(0, sigma^2 I)` noise. `sigma == 0` resamples the support
    /// with replacement.
    pub fn sample_perturbed(&self, sigma: f64, n: usize, seed: u64) -> PointCloud {
        assert!(sigma >= 0.0, "sigma must be non-negative");
        let dim = self.support.dim();
        let m = self.support.len();
        let mut r = rng::seeded(seed);
        let mut coords = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let p = self.support.point(r.random_range(0..m));
            for &c in p {
                let noise = if sigma > 0.0 {
                    sigma * rng::standard_normal(&mut r)
                } else {
                    0.0
                };
                coords.push(c + noise);
            }
        }
        PointCloud::new(dim, coords).expect("perturbed samples are finite")
    }
}

impl ScoreField for GmmField {
    fn dim(&self) -> usize {
        self.support.dim()
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        self.mean_shift(x, sigma, out);
        let inv = 1.0 / (sigma * sigma);
        out.iter_mut().for_each(|v| *v *= inv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn origin() -> GmmField {
        GmmField::new(PointCloud::from_points(&[[0.0, 0.0]]).unwrap())
    }

    #[test]
    fn single_gaussian_log_density() {
        let f = origin();
        let base = (1.0 / (2.0 * PI)).ln();
        assert!((f.log_density(&[0.0, 0.0], 1.0) - base).abs() < 1e-15);
        assert!((f.log_density(&[1.0, 0.0], 1.0) - (base - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn single_gaussian_score_and_distance() {
        let f = origin();
        assert_eq!(f.score(&[1.0, 0.0], 0.5), vec![-4.0, 0.0]);
        for sigma in [1e-3, 0.1, 2.0] {
            assert!((f.distance_estimate(&[0.3, 0.4], sigma) - 0.5).abs() < 1e-15);
        }
        assert_eq!(f.weights(&[5.0, 1.0], 0.1), vec![1.0]);
    }

    #[test]
    fn symmetric_pair_has_zero_score_at_midpoint() {
        let a = 0.7;
        let f = GmmField::new(PointCloud::from_points(&[[-a, 0.0], [a, 0.0]]).unwrap());
        assert_eq!(f.score(&[0.0, 0.0], 0.3), vec![0.0, 0.0]);
        let w = f.weights(&[0.0, 0.0], 0.3);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn equidistant_points_get_equal_weights() {
        let pts: Vec<[f64; 2]> = (0..6)
            .map(|i| {
                let t = i as f64 * PI / 3.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let f = GmmField::new(PointCloud::from_points(&pts).unwrap());
        for w in f.weights(&[0.0, 0.0], 0.2) {
            assert!((w - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn support_point_query_has_near_zero_distance() {
        let f = GmmField::new(PointCloud::from_points(&[[0.0, 0.0], [1.0, 0.0]]).unwrap());
        assert!(f.distance_estimate(&[1.0, 0.0], 0.01) < 1e-12);
    }

    #[test]
    fn cutoff_matches_exact_evaluation() {
        let pts: Vec<[f64; 2]> = (0..50)
            .map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let exact = GmmField::new(PointCloud::from_points(&pts).unwrap());
        let cut = exact.clone().with_cutoff(true);
        for (x, sigma) in [([0.2, 0.1], 0.05), ([1.5, -1.0], 0.01), ([0.0, 0.0], 0.3)] {
            let a = exact.score(&x, sigma);
            let b = cut.score(&x, sigma);
            for k in 0..2 {
                assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs().max(1.0));
            }
            let la = exact.log_density(&x, sigma);
            assert!((la - cut.log_density(&x, sigma)).abs() < 1e-12 * la.abs().max(1.0));
        }
    }

    #[test]
    fn perturbed_sampling() {
        let support =
            PointCloud::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]).unwrap();
        let f = GmmField::new(support.clone());
        let s = f.sample_perturbed(0.0, 200, 3);
        assert_eq!(s.len(), 200);
        assert!(s.iter().all(|p| support.iter().any(|q| q == p)));
        assert_eq!(s, f.sample_perturbed(0.0, 200, 3));
        assert_ne!(s, f.sample_perturbed(0.0, 200, 4));
    }

    #[test]
    fn unit_gaussian_moments() {
        // Law of large numbers at n = 1e4: the mean's standard error is 0.01
        // and the variance's relative standard error is about 1.4%.
        let f = origin();
        let s = f.sample_perturbed(1.0, 10_000, 11);
        let n = s.len() as f64;
        for k in 0..2 {
            let mean: f64 = s.iter().map(|p| p[k]).sum::<f64>() / n;
            let var: f64 = s.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 0.05, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }
}
