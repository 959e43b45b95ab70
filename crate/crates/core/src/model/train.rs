use log::{debug, info};
use rand::seq::SliceRandom;

use super::loss::{evaluate, perturb, PerturbedSet};
use super::AutoEncoder;
use crate::cloud::PointCloud;
use crate::nnet::{AdamConfig, AdamState, Mode, Module, Tensor};
use crate::rng;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

/// Piecewise-linear learning rate: constant `start` until `decay_start`
/// epochs have passed, then linear down to `floor` at `decay_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub start: f64,
    pub floor: f64,
    pub decay_start: usize,
    pub decay_end: usize,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            start: lr,
            floor: lr,
            decay_start: usize::MAX,
            decay_end: usize::MAX,
        }
    }

    /// Rate for the zero-based `epoch`.
    pub fn at(&self, epoch: usize) -> f64 {
        if epoch <= self.decay_start {
            return self.start;
        }
        if epoch >= self.decay_end {
            return self.floor;
        }
        let t = (epoch - self.decay_start) as f64 / (self.decay_end - self.decay_start) as f64;
        self.start + (self.floor - self.start) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: NoiseSchedule,
    /// Shapes per optimisation step.
    pub batch_shapes: usize,
    pub epochs: usize,
    pub encoder_lr: LrSchedule,
    pub decoder_lr: LrSchedule,
    /// Points drawn per shape and level each step; `None` uses every point.
    pub points_per_level: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    /// Rates, batch size and epoch count used for ShapeNet: 2000 epochs of
    /// 64 shapes, decaying linearly after epoch 1000 by a factor of ten.
    pub fn shapenet(schedule: NoiseSchedule, seed: u64) -> Self {
        Self {
            schedule,
            batch_shapes: 64,
            epochs: 2000,
            encoder_lr: LrSchedule {
                start: 1e-3,
                floor: 1e-4,
                decay_start: 1000,
                decay_end: 2000,
            },
            decoder_lr: LrSchedule {
                start: 1e-4,
                floor: 1e-5,
                decay_start: 1000,
                decay_end: 2000,
            },
            points_per_level: None,
            seed,
        }
    }

    /// The MNIST-CP variant: both rates start at 1e-3 and end at 1e-4,
    /// batches of 200 shapes.
    pub fn mnist(schedule: NoiseSchedule, seed: u64) -> Self {
        let lr = LrSchedule {
            start: 1e-3,
            floor: 1e-4,
            decay_start: 1000,
            decay_end: 2000,
        };
        Self {
            batch_shapes: 200,
            encoder_lr: lr,
            decoder_lr: lr,
            ..Self::shapenet(schedule, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_shapes == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch_shapes and epochs must be positive"));
        }
        if self.points_per_level == Some(0) {
            return Err(Error::invalid("points_per_level must be positive"));
        }
        for (name, lr) in [("encoder", &self.encoder_lr), ("decoder", &self.decoder_lr)] {
            if !(lr.start >= 0.0 && lr.floor >= 0.0 && lr.start.is_finite() && lr.floor.is_finite()) {
                return Err(Error::invalid(format!("{name} learning rates must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean weighted loss of each epoch.
    pub loss_history: Vec<f64>,
    /// Mean per-level weighted loss of the last epoch.
    pub final_per_level: Vec<f64>,
    pub iterations: usize,
}

/// Trains encoder and decoder jointly on `dataset`.
///
/// Each step encodes the batch's shapes, perturbs every shape at every level,
/// evaluates the decoder once over all rows and applies one Adam update to
/// each network. The batch loss is the mean over shapes of the summed
/// weighted per-level losses.
pub fn train(
    model: &mut AutoEncoder,
    dataset: &[PointCloud],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for (i, c) in dataset.iter().enumerate() {
        if c.dim() != model.config.dim {
            return Err(Error::shape(
                "train",
                format!("shape {i} has dimension {}, model {}", c.dim(), model.config.dim),
            ));
        }
        let (lo, hi) = c.bounds();
        if lo.iter().chain(&hi).any(|v| v.abs() > 1.0 + 1e-9) {
            return Err(Error::invalid(format!("shape {i} is not normalized to [-1, 1]")));
        }
    }

    let levels = config.schedule.len();
    let mut enc_opt = AdamState::new(&model.encoder.params(), AdamConfig::default());
    let mut dec_opt = AdamState::new(&model.decoder.params(), AdamConfig::default());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut final_per_level = vec![0.0; levels];
    let mut iteration = 0usize;

    for epoch in 0..config.epochs {
        enc_opt.config.lr = config.encoder_lr.at(epoch);
        dec_opt.config.lr = config.decoder_lr.at(epoch);
        order.shuffle(&mut rng::keyed(config.seed, &[0, epoch as u64]));

        let mut epoch_loss = 0.0;
        let mut epoch_levels = vec![0.0; levels];
        let batches: Vec<&[usize]> = order.chunks(config.batch_shapes).collect();
        for batch in &batches {
            let mut perturb_rng = rng::keyed(config.seed, &[1, iteration as u64]);
            let scale = 1.0 / batch.len() as f64;
            let mut caches = Vec::with_capacity(batch.len());
            let mut latents = Vec::with_capacity(batch.len());
            let mut set = PerturbedSet::default();
            let mut owner = Vec::new();
            for (slot, &idx) in batch.iter().enumerate() {
                let (z, cache) = model.encoder.forward(&dataset[idx])?;
                latents.push(z);
                caches.push(cache);
                let part = perturb(
                    &dataset[idx],
                    &config.schedule,
                    config.points_per_level,
                    &mut perturb_rng,
                );
                owner.extend(std::iter::repeat_n(slot, part.rows()));
                set.extend_scaled(part, scale);
            }

            let (res, dec_grads, latent_grads) =
                evaluate(&mut model.decoder, &latents, &owner, &set, levels, Mode::Train)?;
            if let Some(level) = res.per_level.iter().position(|l| !l.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "training loss at iteration {iteration}, sigma level {level} (sigma = {})",
                    config.schedule.sigmas()[level]
                )));
            }

            let mut enc_grads: Vec<Tensor> = model
                .encoder
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            for (cache, g) in caches.iter().zip(&latent_grads) {
                for (acc, d) in enc_grads.iter_mut().zip(model.encoder.backward(cache, g)?) {
                    acc.add_assign(&d);
                }
            }
            dec_opt.step(model.decoder.params_mut(), &dec_grads)?;
            enc_opt.step(model.encoder.params_mut(), &enc_grads)?;

            epoch_loss += res.loss;
            for (a, b) in epoch_levels.iter_mut().zip(&res.per_level) {
                *a += b;
            }
            iteration += 1;
        }
        let nb = batches.len() as f64;
        let mean = epoch_loss / nb;
        history.push(mean);
        final_per_level = epoch_levels.into_iter().map(|l| l / nb).collect();
        debug!("epoch {epoch}: loss {mean:.6}");
        if (epoch + 1) % 100 == 0 || epoch + 1 == config.epochs {
            info!("epoch {}/{}: loss {mean:.6}", epoch + 1, config.epochs);
        }
    }
    Ok(TrainReport {
        loss_history: history,
        final_per_level,
        iterations: iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_decays_linearly() {
        let lr = LrSchedule {
            start: 1e-3,
            floor: 1e-4,
            decay_start: 10,
            decay_end: 20,
        };
        assert_eq!(lr.at(0), 1e-3);
        assert_eq!(lr.at(10), 1e-3);
        assert!((lr.at(15) - 5.5e-4).abs() < 1e-15);
        assert_eq!(lr.at(20), 1e-4);
        assert_eq!(lr.at(500), 1e-4);
        assert_eq!(LrSchedule::constant(0.5).at(1_000_000), 0.5);
    }

    #[test]
    fn shapenet_rates() {
        let c = TrainConfig::shapenet(NoiseSchedule::default(), 0);
        assert_eq!(c.decoder_lr.at(0), 1e-4);
        assert_eq!(c.encoder_lr.at(0), 1e-3);
        assert!((c.decoder_lr.at(1999) - 1e-5).abs() < 1e-7);
        assert!((c.encoder_lr.at(1999) - 1e-4).abs() < 1e-6);
        assert_eq!(c.batch_shapes, 64);
    }
}
