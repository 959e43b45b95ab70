//! Multi-level denoising score matching.
//!
//! For each level `sigma_i` every point `x_j` is perturbed to
//! `x~_j = x_j + sigma_i * eps`, and the decoder is regressed onto the
//! perturbation's score `(x_j - x~_j) / sigma_i^2`. Per-level mean squared
//! residuals are weighted by `lambda(sigma_i)` and summed over levels.

use rand::seq::index;

use super::decoder::{DecoderBatch, ScoreDecoder};
use crate::cloud::PointCloud;
use crate::nnet::{Mode, Tensor};
use crate::rng::{self, Rng};
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

/// Perturbed training rows for one shape (or a concatenation of shapes).
#[derive(Debug, Clone, Default)]
pub struct PerturbedSet {
    pub dim: usize,
    pub noisy: Vec<f64>,
    pub targets: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Loss weight of each row: `lambda(sigma_i) / n_i`.
    pub row_weights: Vec<f64>,
    pub levels: Vec<usize>,
}

impl PerturbedSet {
    pub fn rows(&self) -> usize {
        self.sigmas.len()
    }

    /// Appends `other`, scaling its row weights by `scale`.
    pub fn extend_scaled(&mut self, other: PerturbedSet, scale: f64) {
        self.dim = other.dim;
        self.noisy.extend(other.noisy);
        self.targets.extend(other.targets);
        self.sigmas.extend(other.sigmas);
        self.row_weights
            .extend(other.row_weights.into_iter().map(|w| w * scale));
        self.levels.extend(other.levels);
    }
}

/// Draws one Gaussian perturbation per (point, level). With
/// `points_per_level` set, each level uses a random subset of that many
/// points instead of the whole cloud.
pub fn perturb(
    cloud: &PointCloud,
    schedule: &NoiseSchedule,
    points_per_level: Option<usize>,
    rng: &mut Rng,
) -> PerturbedSet {
    let dim = cloud.dim();
    let mut set = PerturbedSet {
        dim,
        ..Default::default()
    };
    let mut eps = vec![0.0; dim];
    for (level, (&sigma, &lambda)) in schedule.sigmas().iter().zip(schedule.weights()).enumerate() {
        let chosen: Vec<usize> = match points_per_level {
            Some(k) if k < cloud.len() => index::sample(rng, cloud.len(), k).into_vec(),
            _ => (0..cloud.len()).collect(),
        };
        let w = lambda / chosen.len() as f64;
        for j in chosen {
            let x = cloud.point(j);
            rng::fill_normal(rng, &mut eps);
            for k in 0..dim {
                let noisy = x[k] + sigma * eps[k];
                set.noisy.push(noisy);
                set.targets.push((x[k] - noisy) / (sigma * sigma));
            }
            set.sigmas.push(sigma);
            set.row_weights.push(w);
            set.levels.push(level);
        }
    }
    set
}

/// Weighted squared residual between predictions and targets.
#[derive(Debug, Clone)]
pub struct Residual {
    pub loss: f64,
    /// Weighted loss contributed by each level.
    pub per_level: Vec<f64>,
    /// `dL/dprediction`, row-major like the predictions.
    pub grad: Vec<f64>,
}

pub fn residual_loss(pred: &[f64], set: &PerturbedSet, levels: usize) -> Residual {
    let dim = set.dim;
    let mut per_level = vec![0.0; levels];
    let mut grad = vec![0.0; pred.len()];
    for r in 0..set.rows() {
        let w = set.row_weights[r];
        let mut sq = 0.0;
        for k in r * dim..(r + 1) * dim {
            let d = pred[k] - set.targets[k];
            sq += d * d;
            grad[k] = 2.0 * w * d;
        }
        per_level[set.levels[r]] += w * sq;
    }
    Residual {
        loss: per_level.iter().sum(),
        per_level,
        grad,
    }
}

/// Loss value and gradients of one DSM evaluation.
#[derive(Debug, Clone)]
pub struct DsmLoss {
    pub loss: f64,
    pub per_level: Vec<f64>,
    /// Decoder parameter gradients in `Module::params` order.
    pub decoder_grads: Vec<Tensor>,
    pub latent_grad: Vec<f64>,
}

/// Runs the decoder on a perturbed set and backpropagates the weighted
/// residual. Row `r` uses latent `latents[owner[r]]`.
pub(crate) fn evaluate(
    decoder: &mut ScoreDecoder,
    latents: &[Vec<f64>],
    owner: &[usize],
    set: &PerturbedSet,
    levels: usize,
    mode: Mode,
) -> Result<(Residual, Vec<Tensor>, Vec<Vec<f64>>)> {
    let batch = DecoderBatch::new(set.dim, &set.noisy, set.sigmas.clone(), |r| {
        &latents[owner[r]]
    })?;
    let (pred, tape) = decoder.forward(&batch, mode)?;
    let residual = residual_loss(pred.data(), set, levels);
    let grad = Tensor::matrix(set.rows(), set.dim, residual.grad.clone())?;
    let grads = decoder.backward(&tape, &batch, &grad)?;

    let (d, l) = (decoder.dim, decoder.latent_dim);
    let mut latent_grads = vec![vec![0.0; l]; latents.len()];
    for r in 0..set.rows() {
        let row = &grads.input.row(r)[d..d + l];
        for (acc, v) in latent_grads[owner[r]].iter_mut().zip(row) {
            *acc += v;
        }
    }
    Ok((residual, grads.params, latent_grads))
}

/// Weighted multi-level DSM loss of one shape conditioned on `latent`.
/// Perturbations are drawn from `seed`, so equal seeds give identical
/// losses and gradients.
pub fn dsm_loss(
    decoder: &mut ScoreDecoder,
    latent: &[f64],
    cloud: &PointCloud,
    schedule: &NoiseSchedule,
    seed: u64,
    mode: Mode,
) -> Result<DsmLoss> {
    if cloud.dim() != decoder.dim || latent.len() != decoder.latent_dim {
        return Err(Error::shape(
            "dsm_loss",
            format!(
                "cloud dim {} / latent width {} vs decoder ({}, {})",
                cloud.dim(),
                latent.len(),
                decoder.dim,
                decoder.latent_dim
            ),
        ));
    }
    let set = perturb(cloud, schedule, None, &mut rng::seeded(seed));
    let owner = vec![0; set.rows()];
    let latents = vec![latent.to_vec()];
    let (res, decoder_grads, mut latent_grads) =
        evaluate(decoder, &latents, &owner, &set, schedule.len(), mode)?;
    Ok(DsmLoss {
        loss: res.loss,
        per_level: res.per_level,
        decoder_grads,
        latent_grad: latent_grads.remove(0),
    })
}
