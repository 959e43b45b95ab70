//! Gaussian stand-in for a learned latent generator.
//!
//! This is a plain multivariate normal fitted to encoded training shapes. It
//! is not a latent GAN; anything that yields a latent vector can replace it.

use log::warn;

use super::encoder::Encoder;
use crate::cloud::PointCloud;
use crate::rng;
use crate::{Error, Result};

/// Label written next to every artefact produced from sampled latents.
pub const SAMPLER_LABEL: &str = "gaussian-latent (not an l-GAN)";

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSampler {
    mean: Vec<f64>,
    /// Lower-triangular factor `L` with `L L^T = Sigma`, row-major.
    factor: Vec<f64>,
    diagonal: bool,
}

impl LatentSampler {
    /// Fits mean and covariance of `latents`. With fewer samples than
    /// dimensions, or a covariance that is not positive definite, only the
    /// per-coordinate variances are kept.
    pub fn fit(latents: &[Vec<f64>]) -> Result<Self> {
        let n = latents.len();
        let d = latents.first().map(|z| z.len()).unwrap_or(0);
        if n == 0 || d == 0 {
            return Err(Error::invalid("latent sampler needs at least one latent"));
        }
        if latents.iter().any(|z| z.len() != d) {
            return Err(Error::shape("latent sampler", "latents differ in width"));
        }
        let mut mean = vec![0.0; d];
        for z in latents {
            for (m, v) in mean.iter_mut().zip(z) {
                *m += v / n as f64;
            }
        }
        let mut cov = vec![0.0; d * d];
        for z in latents {
            for i in 0..d {
                let a = z[i] - mean[i];
                for j in 0..=i {
                    cov[i * d + j] += a * (z[j] - mean[j]) / n as f64;
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov[j * d + i] = cov[i * d + j];
            }
        }

        if n > d {
            if let Some(factor) = cholesky(&cov, d) {
                return Ok(Self {
                    mean,
                    factor,
                    diagonal: false,
                });
            }
            warn!("latent covariance is not positive definite; using its diagonal");
        } else if n > 1 {
            warn!("{n} latents for width {d}; using a diagonal covariance");
        }
        let mut factor = vec![0.0; d * d];
        for i in 0..d {
            factor[i * d + i] = cov[i * d + i].max(0.0).sqrt();
        }
        Ok(Self {
            mean,
            factor,
            diagonal: true,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let d = self.mean.len();
        let mut eps = vec![0.0; d];
        rng::fill_normal(&mut rng::seeded(seed), &mut eps);
        (0..d)
            .map(|i| {
                let row = &self.factor[i * d..i * d + i + 1];
                self.mean[i] + row.iter().zip(&eps).map(|(l, e)| l * e).sum::<f64>()
            })
            .collect()
    }
}

/// Encodes every shape and fits a [`LatentSampler`] to the codes.
pub fn fit_latent_sampler(encoder: &Encoder, dataset: &[PointCloud]) -> Result<LatentSampler> {
    let latents = dataset
        .iter()
        .map(|c| encoder.encode(c))
        .collect::<Result<Vec<_>>>()?;
    LatentSampler::fit(&latents)
}

/// Cholesky factor of a symmetric `d x d` matrix, or `None` if a pivot is
/// not strictly positive.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let p = a[i * d + i] - s;
                if !(p > 1e-12 * a[i * d + i].abs().max(1e-300)) {
                    return None;
                }
                l[i * d + i] = p.sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_latent_is_reproduced_exactly() {
        let z = vec![0.25, -1.5, 3.0];
        let s = LatentSampler::fit(std::slice::from_ref(&z)).unwrap();
        assert_eq!(s.sample(7), z);
    }

    #[test]
    fn two_latents_have_midpoint_mean() {
        let s = LatentSampler::fit(&[vec![0.0, 2.0], vec![1.0, 4.0]]).unwrap();
        assert_eq!(s.mean(), &[0.5, 3.0]);
        assert!(s.is_diagonal());
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((v - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn full_covariance_sample_moments() {
        // latents on a tilted line plus small noise
        let mut r = rng::seeded(3);
        let latents: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let t = rng::standard_normal(&mut r);
                let e = rng::standard_normal(&mut r);
                vec![t, 0.5 * t + 0.1 * e]
            })
            .collect();
        let s = LatentSampler::fit(&latents).unwrap();
        assert!(!s.is_diagonal());
        let draws: Vec<Vec<f64>> = (0..4000).map(|i| s.sample(i)).collect();
        let cxy: f64 = draws.iter().map(|z| (z[0] - s.mean[0]) * (z[1] - s.mean[1])).sum::<f64>()
            / draws.len() as f64;
        assert!((cxy - 0.5).abs() < 0.1, "cov {cxy}");
    }
}
