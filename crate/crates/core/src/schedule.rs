use crate::{Error, Result};

/// Noise levels `sigma_1 >= ... >= sigma_k > 0` with one loss weight per level.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    weights: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(sigmas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::invalid("noise schedule needs at least one level"));
        }
        if weights.len() != sigmas.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} noise levels",
                weights.len(),
                sigmas.len()
            )));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("noise levels must be finite and positive"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("level weights must be finite and positive"));
        }
        if sigmas.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("noise levels must be non-increasing"));
        }
        Ok(Self { sigmas, weights })
    }

    /// Levels with the default weighting `lambda(sigma) = sigma^2`.
    pub fn with_sigma_squared_weights(sigmas: Vec<f64>) -> Result<Self> {
        let weights = sigmas.iter().map(|s| s * s).collect();
        Self::new(sigmas, weights)
    }

    /// `k` levels geometrically spaced from `sigma_max` down to `sigma_min`,
    /// weighted by `sigma^2` so every level's loss has the same magnitude.
    ///
    /// With `k == 1` the single level is `sigma_max`.
    pub fn geometric(k: usize, sigma_max: f64, sigma_min: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("noise schedule needs k >= 1"));
        }
        if !(sigma_min > 0.0 && sigma_max >= sigma_min) {
            return Err(Error::invalid(format!(
                "need sigma_max >= sigma_min > 0, got {sigma_max} and {sigma_min}"
            )));
        }
        let sigmas = if k == 1 {
            vec![sigma_max]
        } else {
            let ratio = (sigma_min / sigma_max).ln();
            (0..k)
                .map(|i| {
                    if i == k - 1 {
                        sigma_min
                    } else {
                        sigma_max * (ratio * i as f64 / (k - 1) as f64).exp()
                    }
                })
                .collect()
        };
        Self::with_sigma_squared_weights(sigmas)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    /// The smallest (finest) level.
    pub fn sigma_min(&self) -> f64 {
        *self.sigmas.last().unwrap()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }
}

/// The schedule used throughout the experiments: ten levels from 1 to 0.01.
impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::geometric(10, 1.0, 0.01).expect("valid default schedule")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_levels_from_one_to_a_hundredth() {
        let s = NoiseSchedule::geometric(10, 1.0, 0.01).unwrap();
        assert_eq!(s.len(), 10);
        for (i, (&sigma, &w)) in s.sigmas().iter().zip(s.weights()).enumerate() {
            let expected = 10f64.powf(-2.0 * i as f64 / 9.0);
            assert!((sigma - expected).abs() < 1e-14 * expected.max(1e-2));
            assert_eq!(w, sigma * sigma);
        }
        assert_eq!(s.sigma_max(), 1.0);
        assert_eq!(s.sigma_min(), 0.01);
    }

    #[test]
    fn single_and_three_level_schedules() {
        let s = NoiseSchedule::geometric(1, 0.1, 0.1).unwrap();
        assert_eq!(s.sigmas(), &[0.1]);
        assert!((s.weights()[0] - 0.01).abs() < 1e-15);

        let s = NoiseSchedule::geometric(3, 1.0, 0.01).unwrap();
        assert!((s.sigmas()[1] - 0.1).abs() < 1e-15);
        assert_eq!(s.sigmas()[0], 1.0);
        assert_eq!(s.sigmas()[2], 0.01);
    }

    #[test]
    fn rejects_invalid_schedules() {
        assert!(NoiseSchedule::geometric(0, 1.0, 0.01).is_err());
        assert!(NoiseSchedule::geometric(3, 0.01, 1.0).is_err());
        assert!(NoiseSchedule::with_sigma_squared_weights(vec![0.1, 0.5]).is_err());
        assert!(NoiseSchedule::new(vec![1.0, 0.5], vec![1.0]).is_err());
        assert!(NoiseSchedule::new(vec![1.0], vec![0.0]).is_err());
        assert!(NoiseSchedule::new(vec![1.0, -0.5], vec![1.0, 1.0]).is_err());
        assert!(NoiseSchedule::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_ok());
    }
}
