use crate::field::ScoreField;
use crate::nnet::{CbnResNet, Gradients, Mode, Module, Tape, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// How the raw network output is turned into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputScaling {
    /// The network output is the score.
    Identity,
    /// The score is the network output divided by sigma, so the network
    /// regresses unit-scale quantities at every noise level.
    InverseSigma,
}

impl OutputScaling {
    pub fn name(self) -> &'static str {
        match self {
            OutputScaling::Identity => "identity",
            OutputScaling::InverseSigma => "inverse_sigma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(OutputScaling::Identity),
            "inverse_sigma" => Some(OutputScaling::InverseSigma),
            _ => None,
        }
    }

    fn factor(self, sigma: f64) -> f64 {
        match self {
            OutputScaling::Identity => 1.0,
            OutputScaling::InverseSigma => 1.0 / sigma,
        }
    }
}

/// Conditional score network `g(x, z, sigma)`.
///
/// Each row fed to the residual network is `[x, z, sigma]`; the same vector
/// conditions every batch-normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDecoder {
    pub net: CbnResNet,
    pub dim: usize,
    pub latent_dim: usize,
    pub scaling: OutputScaling,
}

/// One decoder batch: rows of `[x, z, sigma]` and the sigma of every row.
#[derive(Debug, Clone)]
pub struct DecoderBatch {
    pub input: Tensor,
    pub sigmas: Vec<f64>,
}

impl DecoderBatch {
    /// Builds rows from points, one latent per row (via `latent_of`) and one
    /// sigma per row.
    pub fn new<'a>(
        dim: usize,
        points: &[f64],
        sigmas: Vec<f64>,
        latent_of: impl Fn(usize) -> &'a [f64],
    ) -> Result<Self> {
        let n = points.len() / dim;
        if sigmas.len() != n {
            return Err(Error::shape("decoder input", "one sigma per row required"));
        }
        let latent_dim = if n > 0 { latent_of(0).len() } else { 0 };
        let width = dim + latent_dim + 1;
        let mut data = Vec::with_capacity(n * width);
        for (r, x) in points.chunks_exact(dim).enumerate() {
            data.extend_from_slice(x);
            data.extend_from_slice(latent_of(r));
            data.push(sigmas[r]);
        }
        Ok(Self {
            input: Tensor::matrix(n, width, data)?,
            sigmas,
        })
    }
}

impl ScoreDecoder {
    pub fn new(
        dim: usize,
        latent_dim: usize,
        hidden: usize,
        blocks: usize,
        scaling: OutputScaling,
        rng: &mut Rng,
    ) -> Self {
        let width = dim + latent_dim + 1;
        Self {
            net: CbnResNet::new(width, width, hidden, blocks, dim, rng),
            dim,
            latent_dim,
            scaling,
        }
    }

    pub fn input_width(&self) -> usize {
        self.dim + self.latent_dim + 1
    }

    fn scale_output(&self, mut raw: Tensor, sigmas: &[f64]) -> Tensor {
        for (r, &s) in sigmas.iter().enumerate() {
            let f = self.scaling.factor(s);
            raw.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        raw
    }

    /// Scores for every row; `mode` selects batch or running statistics.
    pub fn forward(&mut self, batch: &DecoderBatch, mode: Mode) -> Result<(Tensor, Tape)> {
        let (raw, tape) = self.net.forward(&batch.input, &batch.input, mode)?;
        Ok((self.scale_output(raw, &batch.sigmas), tape))
    }

    pub fn infer(&self, batch: &DecoderBatch) -> Result<Tensor> {
        let raw = self.net.infer(&batch.input, &batch.input)?;
        Ok(self.scale_output(raw, &batch.sigmas))
    }

    /// Backpropagates `dL/dscore`. The returned `input` gradient already
    /// includes the conditioning path.
    pub fn backward(&self, tape: &Tape, batch: &DecoderBatch, grad: &Tensor) -> Result<Gradients> {
        let mut g = grad.clone();
        for (r, &s) in batch.sigmas.iter().enumerate() {
            let f = self.scaling.factor(s);
            g.row_mut(r).iter_mut().for_each(|v| *v *= f);
        }
        let mut grads = self.net.backward(tape, &g)?;
        grads.input.add_assign(&grads.cond);
        Ok(grads)
    }

    /// A [`ScoreField`] view for one latent code, evaluated in eval mode.
    pub fn conditioned<'a>(&'a self, latent: &[f64]) -> Result<ConditionedDecoder<'a>> {
        if latent.len() != self.latent_dim {
            return Err(Error::shape(
                "decoder",
                format!("latent has width {}, expected {}", latent.len(), self.latent_dim),
            ));
        }
        Ok(ConditionedDecoder {
            decoder: self,
            latent: latent.to_vec(),
        })
    }
}

impl Module for ScoreDecoder {
    fn params(&self) -> Vec<&Tensor> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        self.net.named_tensors(prefix)
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        self.net.named_tensors_mut(prefix)
    }
}

/// Rows per inference call when evaluating large query batches.
const INFER_CHUNK: usize = 4096;

/// A decoder bound to one latent code.
#[derive(Debug, Clone)]
pub struct ConditionedDecoder<'a> {
    decoder: &'a ScoreDecoder,
    latent: Vec<f64>,
}

impl ConditionedDecoder<'_> {
    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    fn eval(&self, points: &[f64], sigma: f64) -> Vec<f64> {
        let d = self.decoder.dim;
        let n = points.len() / d;
        let batch = DecoderBatch::new(d, points, vec![sigma; n], |_| &self.latent)
            .expect("row layout is consistent");
        self.decoder
            .infer(&batch)
            .expect("decoder shapes are consistent")
            .into_data()
    }
}

impl ScoreField for ConditionedDecoder<'_> {
    fn dim(&self) -> usize {
        self.decoder.dim
    }

    fn score_into(&self, x: &[f64], sigma: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.eval(x, sigma));
    }

    fn score_batch(&self, points: &[f64], sigma: f64) -> Vec<f64> {
        let d = self.decoder.dim;
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(INFER_CHUNK * d) {
            out.extend(self.eval(chunk, sigma));
        }
        out
    }
}
