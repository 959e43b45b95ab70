use crate::cloud::PointCloud;
use crate::nnet::{relu, relu_backward, Linear, Module, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Permutation-invariant point cloud encoder: a shared per-point MLP with
/// ReLU activations, a coordinatewise max-pool over points and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub layers: Vec<Linear>,
    pub head: Linear,
}

/// Forward state for [`Encoder::backward`].
#[derive(Debug, Clone)]
pub struct EncoderCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    argmax: Vec<usize>,
    pooled: Tensor,
}

impl Encoder {
    pub fn new(dim: usize, hidden: &[usize], latent: usize, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = dim;
        for &h in hidden {
            layers.push(Linear::new(width, h, rng));
            width = h;
        }
        Self {
            layers,
            head: Linear::new(width, latent, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map(|l| l.inputs())
            .unwrap_or_else(|| self.head.inputs())
    }

    pub fn latent_dim(&self) -> usize {
        self.head.outputs()
    }

    fn check(&self, cloud: &PointCloud) -> Result<()> {
        if cloud.dim() != self.input_dim() {
            return Err(Error::shape(
                "encoder",
                format!(
                    "cloud has dimension {}, encoder expects {}",
                    cloud.dim(),
                    self.input_dim()
                ),
            ));
        }
        Ok(())
    }

    pub fn encode(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        Ok(self.forward(cloud)?.0)
    }

    pub fn forward(&self, cloud: &PointCloud) -> Result<(Vec<f64>, EncoderCache)> {
        self.check(cloud)?;
        let mut h = Tensor::matrix(cloud.len(), cloud.dim(), cloud.coords().to_vec())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h, &format!("encoder.layer{i}"))?;
            inputs.push(h);
            h = relu(&z);
            pre.push(z);
        }
        let width = h.cols();
        let mut pooled = vec![f64::NEG_INFINITY; width];
        let mut argmax = vec![0usize; width];
        for r in 0..h.rows() {
            for (k, &v) in h.row(r).iter().enumerate() {
                // ties: the first maximal row receives the gradient
                if v > pooled[k] {
                    pooled[k] = v;
                    argmax[k] = r;
                }
            }
        }
        let pooled = Tensor::matrix(1, width, pooled)?;
        let latent = self.head.forward(&pooled, "encoder.head")?.into_data();
        Ok((
            latent,
            EncoderCache {
                inputs,
                pre,
                argmax,
                pooled,
            },
        ))
    }

    /// Parameter gradients (in `Module::params` order) given `dL/dlatent`.
    pub fn backward(&self, cache: &EncoderCache, latent_grad: &[f64]) -> Result<Vec<Tensor>> {
        if latent_grad.len() != self.latent_dim() {
            return Err(Error::shape("encoder.backward", "latent gradient width"));
        }
        let g = Tensor::matrix(1, latent_grad.len(), latent_grad.to_vec())?;
        let (dpooled, head_grads) = self.head.backward(&cache.pooled, &g);

        let rows = cache
            .pre
            .last()
            .map(|t| t.rows())
            .unwrap_or(cache.pooled.rows());
        let width = cache.pooled.cols();
        let mut dh = Tensor::zeros(&[rows, width]);
        for (k, &r) in cache.argmax.iter().enumerate() {
            dh.row_mut(r)[k] += dpooled.data()[k];
        }

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dz = relu_backward(&cache.pre[i], &dh);
            let (dx, grads) = layer.backward(&cache.inputs[i], &dz);
            dh = dx;
            layer_grads.push(grads);
        }
        layer_grads.reverse();
        let mut out: Vec<Tensor> = layer_grads.into_iter().flatten().collect();
        out.extend(head_grads);
        Ok(out)
    }
}

impl Module for Encoder {
    fn params(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self.layers.iter().flat_map(|l| l.params()).collect();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        p.extend(self.head.params_mut());
        p
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut t: Vec<_> = self
            .layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.named_tensors(&format!("{prefix}.layer{i}")))
            .collect();
        t.extend(self.head.named_tensors(&format!("{prefix}.head")));
        t
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut t: Vec<_> = self
            .layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| l.named_tensors_mut(&format!("{prefix}.layer{i}")))
            .collect();
        t.extend(self.head.named_tensors_mut(&format!("{prefix}.head")));
        t
    }
}
