//! Auto-encoder of point clouds into conditional score fields.
//!
//! An [`Encoder`] maps a cloud to a latent `z`; a [`ScoreDecoder`] maps
//! `(x, z, sigma)` to an estimate of the perturbed log-density gradient.

mod checkpoint;
mod decoder;
mod encoder;
mod latent;
mod loss;
mod train;

pub use checkpoint::Checkpoint;
pub use decoder::{ConditionedDecoder, DecoderBatch, OutputScaling, ScoreDecoder};
pub use encoder::{Encoder, EncoderCache};
pub use latent::{fit_latent_sampler, LatentSampler, SAMPLER_LABEL};
pub use loss::{dsm_loss, perturb, residual_loss, DsmLoss, PerturbedSet, Residual};
pub use train::{train, LrSchedule, TrainConfig, TrainReport};

use crate::cloud::PointCloud;
use crate::nnet::{Mode, Module, Tensor};
use crate::schedule::NoiseSchedule;
use crate::rng;
use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: usize,
    pub decoder_blocks: usize,
    pub scaling: OutputScaling,
}

impl ModelConfig {
    /// Small model that trains on a CPU in minutes.
    pub fn desk(dim: usize) -> Self {
        Self {
            dim,
            latent_dim: 32,
            encoder_hidden: vec![64, 128],
            decoder_hidden: 64,
            decoder_blocks: 4,
            scaling: OutputScaling::InverseSigma,
        }
    }

    /// Full-size architecture: 128-wide latent, eight 256-wide blocks.
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            latent_dim: 128,
            encoder_hidden: vec![64, 128, 1024],
            decoder_hidden: 256,
            decoder_blocks: 8,
            scaling: OutputScaling::InverseSigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if self.latent_dim == 0 || self.decoder_hidden == 0 || self.encoder_hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: ScoreDecoder,
}

impl AutoEncoder {
    /// Fresh weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(
            config.dim,
            &config.encoder_hidden,
            config.latent_dim,
            &mut rng::keyed(seed, &[0]),
        );
        let decoder = ScoreDecoder::new(
            config.dim,
            config.latent_dim,
            config.decoder_hidden,
            config.decoder_blocks,
            config.scaling,
            &mut rng::keyed(seed, &[1]),
        );
        Ok(Self {
            config,
            encoder,
            decoder,
        })
    }

    pub fn encode(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        self.encoder.encode(cloud)
    }

    /// The eval-mode score field of `cloud`'s latent code.
    pub fn field_for(&self, latent: &[f64]) -> Result<ConditionedDecoder<'_>> {
        self.decoder.conditioned(latent)
    }

    /// Single-shape auto-encoding loss and its gradient with respect to every
    /// parameter (encoder first, as in `Module::params`). Perturbations are
    /// drawn from `seed`; batch statistics come from this shape alone.
    pub fn loss_and_gradients(
        &mut self,
        cloud: &PointCloud,
        schedule: &NoiseSchedule,
        seed: u64,
    ) -> Result<(f64, Vec<Tensor>)> {
        let (latent, cache) = self.encoder.forward(cloud)?;
        let out = dsm_loss(&mut self.decoder, &latent, cloud, schedule, seed, Mode::Train)?;
        let mut grads = self.encoder.backward(&cache, &out.latent_grad)?;
        grads.extend(out.decoder_grads);
        Ok((out.loss, grads))
    }
}

impl Module for AutoEncoder {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let join = |name: &str| if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") };
        let mut t = self.encoder.named_tensors(&join("encoder"));
        t.extend(self.decoder.named_tensors(&join("decoder")));
        t
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let join = |name: &str| if prefix.is_empty() { name.to_string() } else { format!("{prefix}.{name}") };
        let mut t = self.encoder.named_tensors_mut(&join("encoder"));
        t.extend(self.decoder.named_tensors_mut(&join("decoder")));
        t
    }
}
