//! Langevin and annealed Langevin dynamics over a [`ScoreField`].
//!
//! The annealed sampler visits the noise levels coarse to fine. At level `i`
//! it runs `T` updates
//!
//! ```text
//! x' = x + sqrt(alpha) * sigma_i / sigma_k * eps
//! x  = x' + alpha * sigma_i^2 / (2 sigma_k^2) * g(x', sigma_i)
//! ```
//!
//! where `sigma_k` is the finest level. Noise is drawn from a generator keyed
//! by `(seed, chain, level, step)`, so every chain is reproducible on its own.

use rand::Rng as _;

use crate::cloud::PointCloud;
use crate::field::ScoreField;
use crate::rng;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

/// Initial distribution of the chains.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// Uniform over `[-1, 1]^D`.
    Uniform,
    Gaussian { mean: Vec<f64>, std: f64 },
    FixedPoint(Vec<f64>),
}

impl Prior {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Prior::Uniform => Ok(()),
            Prior::Gaussian { mean, std } => {
                if mean.len() != dim {
                    return Err(Error::shape("prior", "Gaussian mean width"));
                }
                if !(*std > 0.0 && std.is_finite()) {
                    return Err(Error::invalid("Gaussian prior needs std > 0"));
                }
                Ok(())
            }
            Prior::FixedPoint(p) if p.len() != dim => Err(Error::shape("prior", "fixed point width")),
            Prior::FixedPoint(_) => Ok(()),
        }
    }

    fn draw(&self, rng: &mut rng::Rng, out: &mut [f64]) {
        match self {
            Prior::Uniform => out.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0)),
            Prior::Gaussian { mean, std } => {
                rng::fill_normal(rng, out);
                for (v, m) in out.iter_mut().zip(mean) {
                    *v = m + std * *v;
                }
            }
            Prior::FixedPoint(p) => out.copy_from_slice(p),
        }
    }
}

/// Order of the two half-steps inside one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Perturb, then follow the gradient at the perturbed point.
    #[default]
    NoiseFirst,
    /// Follow the gradient, then perturb.
    GradientFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub steps_per_level: usize,
    pub schedule: NoiseSchedule,
    pub prior: Prior,
    pub ordering: Ordering,
    pub seed: u64,
}

impl SamplerConfig {
    /// `T = 10`, `alpha = 2e-4`, uniform prior.
    pub fn new(schedule: NoiseSchedule, seed: u64) -> Self {
        Self {
            alpha: 2e-4,
            steps_per_level: 10,
            schedule,
            prior: Prior::Uniform,
            ordering: Ordering::NoiseFirst,
            seed,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.steps_per_level == 0 {
            return Err(Error::invalid("steps_per_level must be at least 1"));
        }
        self.prior.validate(dim)
    }
}

/// One unadjusted Langevin update `x + alpha/2 * g(x) + sqrt(alpha) * noise`.
pub fn langevin_step<F: ScoreField + ?Sized>(
    field: &F,
    x: &[f64],
    sigma: f64,
    alpha: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && sigma > 0.0) {
        return Err(Error::invalid("langevin_step needs alpha > 0 and sigma > 0"));
    }
    let g = field.score(x, sigma);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("score at {x:?}, sigma {sigma}")));
    }
    let s = alpha.sqrt();
    Ok(x.iter()
        .zip(&g)
        .zip(noise)
        .map(|((x, g), n)| x + 0.5 * alpha * g + s * n)
        .collect())
}

/// Progress reported by [`annealed_sample_observed`].
#[derive(Debug)]
pub enum SampleEvent<'a> {
    /// Chains drawn from the prior, before any update.
    Initial { points: &'a [f64] },
    LevelStart { level: usize, sigma: f64 },
    /// Chain positions after the last step of a level.
    LevelEnd { level: usize, sigma: f64, points: &'a [f64] },
}

/// Draws `n` points by annealed Langevin dynamics.
pub fn annealed_sample<F: ScoreField + ?Sized>(
    field: &F,
    config: &SamplerConfig,
    n: usize,
) -> Result<PointCloud> {
    annealed_sample_observed(field, config, n, |_| {})
}

/// [`annealed_sample`] with a callback at the prior draw and at level
/// boundaries.
pub fn annealed_sample_observed<F: ScoreField + ?Sized>(
    field: &F,
    config: &SamplerConfig,
    n: usize,
    mut observe: impl FnMut(SampleEvent<'_>),
) -> Result<PointCloud> {
    let d = field.dim();
    config.validate(d)?;
    if n == 0 {
        return Err(Error::invalid("need at least one chain"));
    }

    let mut x = vec![0.0; n * d];
    for (c, p) in x.chunks_exact_mut(d).enumerate() {
        config.prior.draw(&mut rng::keyed(config.seed, &[0, c as u64]), p);
    }
    observe(SampleEvent::Initial { points: &x });

    let sigma_k = config.schedule.sigma_min();
    let alpha = config.alpha;
    let mut eps = vec![0.0; d];
    for (level, &sigma) in config.schedule.sigmas().iter().enumerate() {
        observe(SampleEvent::LevelStart { level, sigma });
        let noise_scale = alpha.sqrt() * sigma / sigma_k;
        let grad_scale = alpha * sigma * sigma / (2.0 * sigma_k * sigma_k);
        for step in 0..config.steps_per_level {
            let add_noise = |x: &mut [f64], eps: &mut [f64]| {
                for (c, p) in x.chunks_exact_mut(d).enumerate() {
                    let key = [1, c as u64, level as u64, step as u64];
                    rng::fill_normal(&mut rng::keyed(config.seed, &key), eps);
                    for (v, e) in p.iter_mut().zip(eps.iter()) {
                        *v += noise_scale * e;
                    }
                }
            };
            let follow_gradient = |x: &mut [f64]| -> Result<()> {
                let g = field.score_batch(x, sigma);
                if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "score of chain {} at level {level}, step {step} (sigma = {sigma})",
                        i / d
                    )));
                }
                for (v, g) in x.iter_mut().zip(&g) {
                    *v += grad_scale * g;
                }
                Ok(())
            };
            match config.ordering {
                Ordering::NoiseFirst => {
                    add_noise(&mut x, &mut eps);
                    follow_gradient(&mut x)?;
                }
                Ordering::GradientFirst => {
                    follow_gradient(&mut x)?;
                    add_noise(&mut x, &mut eps);
                }
            }
        }
        observe(SampleEvent::LevelEnd {
            level,
            sigma,
            points: &x,
        });
    }
    PointCloud::new(d, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::GmmField;
    use crate::field::FnField;

    fn circle(n: usize) -> PointCloud {
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                [0.5 * t.cos(), 0.5 * t.sin()]
            })
            .collect();
        PointCloud::from_points(&pts).unwrap()
    }

    fn mean_radial_error(c: &PointCloud) -> f64 {
        c.iter()
            .map(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 0.5).abs())
            .sum::<f64>()
            / c.len() as f64
    }

    #[test]
    fn zero_field_steps() {
        let zero = FnField::new(2, |_: &[f64], _: f64, out: &mut [f64]| out.fill(0.0));
        let x = [0.3, -0.2];
        assert_eq!(langevin_step(&zero, &x, 1.0, 0.04, &[0.0, 0.0]).unwrap(), x);
        let y = langevin_step(&zero, &x, 1.0, 0.04, &[1.0, -2.0]).unwrap();
        assert_eq!(y, vec![0.3 + 0.2, -0.2 - 0.4]);
        assert!(langevin_step(&zero, &x, 1.0, 0.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn unit_gaussian_stationary_variance() {
        let field = FnField::new(2, |x: &[f64], s: f64, out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = -v / (s * s);
            }
        });
        let mut r = rng::seeded(4);
        let mut x = vec![0.0, 0.0];
        let mut noise = vec![0.0; 2];
        let (mut s1, mut s2) = ([0.0; 2], [0.0; 2]);
        let n = 100_000;
        for _ in 0..n {
            rng::fill_normal(&mut r, &mut noise);
            x = langevin_step(&field, &x, 1.0, 0.01, &noise).unwrap();
            for k in 0..2 {
                s1[k] += x[k];
                s2[k] += x[k] * x[k];
            }
        }
        for k in 0..2 {
            let mean = s1[k] / n as f64;
            let var = s2[k] / n as f64 - mean * mean;
            assert!((var - 1.0).abs() < 0.1, "variance {var}");
        }
    }

    #[test]
    fn single_level_reduces_to_plain_langevin() {
        let oracle = GmmField::new(circle(50));
        let schedule = NoiseSchedule::with_sigma_squared_weights(vec![0.1]).unwrap();
        let mut config = SamplerConfig::new(schedule, 9);
        config.alpha = 1e-3;
        config.steps_per_level = 4;
        config.prior = Prior::FixedPoint(vec![0.2, 0.1]);
        let out = annealed_sample(&oracle, &config, 2).unwrap();

        for c in 0..2u64 {
            let mut x = vec![0.2, 0.1];
            let mut eps = vec![0.0; 2];
            for step in 0..4u64 {
                rng::fill_normal(&mut rng::keyed(9, &[1, c, 0, step]), &mut eps);
                let s = config.alpha.sqrt();
                let xp: Vec<f64> = x.iter().zip(&eps).map(|(x, e)| x + s * e).collect();
                let g = oracle.score(&xp, 0.1);
                x = xp.iter().zip(&g).map(|(x, g)| x + 0.5 * config.alpha * g).collect();
            }
            let got = out.point(c as usize);
            for k in 0..2 {
                assert!((got[k] - x[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn circle_oracle_samples_lie_on_the_circle() {
        let oracle = GmmField::new(circle(500));
        let config = SamplerConfig::new(NoiseSchedule::default(), 1);
        let out = annealed_sample(&oracle, &config, 500).unwrap();
        let err = mean_radial_error(&out);
        assert!(err < 0.03, "mean radial error {err}");
        let again = annealed_sample(&oracle, &config, 500).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn levels_are_visited_coarse_to_fine() {
        let oracle = GmmField::new(circle(20));
        let config = SamplerConfig::new(NoiseSchedule::geometric(4, 1.0, 0.1).unwrap(), 2);
        let mut seen = Vec::new();
        annealed_sample_observed(&oracle, &config, 3, |e| {
            if let SampleEvent::LevelStart { sigma, .. } = e {
                seen.push(sigma);
            }
        })
        .unwrap();
        assert_eq!(seen, config.schedule.sigmas());
    }

    #[test]
    fn non_finite_scores_are_reported() {
        let bad = FnField::new(2, |_: &[f64], _: f64, out: &mut [f64]| out.fill(f64::NAN));
        let config = SamplerConfig::new(NoiseSchedule::default(), 0);
        let err = annealed_sample(&bad, &config, 2).unwrap_err();
        assert!(err.to_string().contains("level 0, step 0"));
    }
}
