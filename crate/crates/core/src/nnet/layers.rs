//! Layer types with explicit forward caches and backward passes.

use rand::Rng as _;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// Whether batch-normalization layers use batch statistics (and update their
/// running estimates) or the frozen running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Access to trainable tensors and persistent buffers in a stable order.
pub trait Module {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    /// Every persisted tensor (parameters and buffers), named for
    /// serialization.
    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)>;
    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `y = x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` initialization for weights and bias.
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let weight = Tensor::matrix(outputs, inputs, draw(outputs * inputs)).unwrap();
        let bias = Tensor::from_vec(vec![outputs], draw(outputs)).unwrap();
        Self { weight, bias }
    }

    /// Constant weights and bias.
    pub fn constant(inputs: usize, outputs: usize, weight: f64, bias: f64) -> Self {
        Self {
            weight: Tensor::full(&[outputs, inputs], weight),
            bias: Tensor::full(&[outputs], bias),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor, name: &str) -> Result<Tensor> {
        if x.cols() != self.inputs() {
            return Err(Error::shape(
                name,
                format!("expected {} input features, got {}", self.inputs(), x.cols()),
            ));
        }
        let mut y = matmul_nt(x, &self.weight);
        let b = self.bias.data();
        for r in y.data_mut().chunks_exact_mut(b.len()) {
            for (v, bb) in r.iter_mut().zip(b) {
                *v += bb;
            }
        }
        Ok(y)
    }

    /// Returns `(dL/dx, [dL/dW, dL/db])` given the forward input and the
    /// upstream gradient.
    pub fn backward(&self, x: &Tensor, grad: &Tensor) -> (Tensor, Vec<Tensor>) {
        let dw = matmul_tn(grad, x);
        let db = Tensor::from_vec(vec![self.outputs()], grad.sum_rows()).unwrap();
        let dx = matmul_nn(grad, &self.weight);
        (dx, vec![dw, db])
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        vec![
            (join(prefix, "weight"), &self.weight),
            (join(prefix, "bias"), &self.bias),
        ]
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        vec![
            (join(prefix, "weight"), &mut self.weight),
            (join(prefix, "bias"), &mut self.bias),
        ]
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(x.shape().to_vec(), data).unwrap()
}

/// Gradient through ReLU given its *input*. The derivative at exactly zero is 0.
pub fn relu_backward(pre: &Tensor, grad: &Tensor) -> Tensor {
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(grad.shape().to_vec(), data).unwrap()
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Conditional batch normalization:
/// `y = gamma(c) * (x - mu) / sqrt(var + eps) + beta(c)`, with `gamma` and
/// `beta` affine in the conditioning vector `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondBatchNorm {
    pub gamma_map: Linear,
    pub beta_map: Linear,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct CbnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    gamma: Tensor,
    mode: Mode,
}

impl CondBatchNorm {
    /// Starts as plain normalization: `gamma == 1`, `beta == 0` for every
    /// conditioning vector.
    pub fn new(features: usize, cond: usize) -> Self {
        Self {
            gamma_map: Linear::constant(cond, features, 0.0, 1.0),
            beta_map: Linear::constant(cond, features, 0.0, 0.0),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], 1.0),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    fn statistics(&mut self, x: &Tensor, mode: Mode, name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = self.features();
        match mode {
            Mode::Eval => Ok((
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            )),
            Mode::Train => {
                let n = x.rows();
                if n < 2 {
                    return Err(Error::shape(
                        name,
                        "batch statistics need at least 2 rows in training mode",
                    ));
                }
                let mut mean = x.sum_rows();
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; f];
                for r in x.data().chunks_exact(f) {
                    for k in 0..f {
                        let d = r[k] - mean[k];
                        var[k] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let unbias = n as f64 / (n as f64 - 1.0);
                let m = self.momentum;
                for k in 0..f {
                    let rm = &mut self.running_mean.data_mut()[k];
                    *rm = (1.0 - m) * *rm + m * mean[k];
                    let rv = &mut self.running_var.data_mut()[k];
                    *rv = (1.0 - m) * *rv + m * var[k] * unbias;
                }
                Ok((mean, var))
            }
        }
    }

    /// Forward pass. In `Mode::Train` the running statistics are updated;
    /// in `Mode::Eval` nothing is mutated.
    pub fn forward(
        &mut self,
        x: &Tensor,
        cond: &Tensor,
        mode: Mode,
        name: &str,
    ) -> Result<(Tensor, CbnCache)> {
        let f = self.features();
        if x.cols() != f || cond.rows() != x.rows() {
            return Err(Error::shape(
                name,
                format!(
                    "input {:?} / conditioning {:?} do not match {f} features",
                    x.shape(),
                    cond.shape()
                ),
            ));
        }
        let gamma = self.gamma_map.forward(cond, name)?;
        let beta = self.beta_map.forward(cond, name)?;
        let (mean, var) = self.statistics(x, mode, name)?;
        Ok(normalize(x, &gamma, &beta, &mean, &var, self.eps, mode))
    }

    /// Evaluation-mode forward through a shared reference.
    pub fn infer(&self, x: &Tensor, cond: &Tensor, name: &str) -> Result<Tensor> {
        if x.cols() != self.features() || cond.rows() != x.rows() {
            return Err(Error::shape(name, "input / conditioning shape mismatch"));
        }
        let gamma = self.gamma_map.forward(cond, name)?;
        let beta = self.beta_map.forward(cond, name)?;
        let (y, _) = normalize(
            x,
            &gamma,
            &beta,
            self.running_mean.data(),
            self.running_var.data(),
            self.eps,
            Mode::Eval,
        );
        Ok(y)
    }

    /// Returns `(dL/dx, dL/dcond, [gamma W, gamma b, beta W, beta b])`.
    pub fn backward(
        &self,
        cache: &CbnCache,
        cond: &Tensor,
        grad: &Tensor,
    ) -> (Tensor, Tensor, Vec<Tensor>) {
        let f = self.features();
        let n = grad.rows();
        let mut dgamma = grad.clone();
        for (dg, xh) in dgamma.data_mut().iter_mut().zip(cache.xhat.data()) {
            *dg *= xh;
        }
        let (dc_gamma, mut grads) = self.gamma_map.backward(cond, &dgamma);
        let (dc_beta, beta_grads) = self.beta_map.backward(cond, grad);
        grads.extend(beta_grads);
        let mut dcond = dc_gamma;
        dcond.add_assign(&dc_beta);

        let mut dxhat = grad.clone();
        for (d, g) in dxhat.data_mut().iter_mut().zip(cache.gamma.data()) {
            *d *= g;
        }
        let mut dx = dxhat.clone();
        match cache.mode {
            Mode::Eval => {
                for r in dx.data_mut().chunks_exact_mut(f) {
                    for k in 0..f {
                        r[k] *= cache.inv_std[k];
                    }
                }
            }
            Mode::Train => {
                let mut mean_d = vec![0.0; f];
                let mut mean_dx = vec![0.0; f];
                for (dr, xr) in dxhat
                    .data()
                    .chunks_exact(f)
                    .zip(cache.xhat.data().chunks_exact(f))
                {
                    for k in 0..f {
                        mean_d[k] += dr[k];
                        mean_dx[k] += dr[k] * xr[k];
                    }
                }
                mean_d.iter_mut().for_each(|v| *v /= n as f64);
                mean_dx.iter_mut().for_each(|v| *v /= n as f64);
                for (r, xr) in dx
                    .data_mut()
                    .chunks_exact_mut(f)
                    .zip(cache.xhat.data().chunks_exact(f))
                {
                    for k in 0..f {
                        r[k] = cache.inv_std[k] * (r[k] - mean_d[k] - xr[k] * mean_dx[k]);
                    }
                }
            }
        }
        (dx, dcond, grads)
    }
}

fn normalize(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &[f64],
    var: &[f64],
    eps: f64,
    mode: Mode,
) -> (Tensor, CbnCache) {
    let f = mean.len();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v.max(0.0) + eps).sqrt()).collect();
    let mut xhat = x.clone();
    for r in xhat.data_mut().chunks_exact_mut(f) {
        for k in 0..f {
            r[k] = (r[k] - mean[k]) * inv_std[k];
        }
    }
    let mut y = xhat.clone();
    for ((v, g), b) in y.data_mut().iter_mut().zip(gamma.data()).zip(beta.data()) {
        *v = *v * g + b;
    }
    let cache = CbnCache {
        xhat,
        inv_std,
        gamma: gamma.clone(),
        mode,
    };
    (y, cache)
}

impl Module for CondBatchNorm {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.gamma_map.params();
        p.extend(self.beta_map.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.gamma_map.params_mut();
        p.extend(self.beta_map.params_mut());
        p
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut t = self.gamma_map.named_tensors(&join(prefix, "gamma"));
        t.extend(self.beta_map.named_tensors(&join(prefix, "beta")));
        t.push((join(prefix, "running_mean"), &self.running_mean));
        t.push((join(prefix, "running_var"), &self.running_var));
        t
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut t = self.gamma_map.named_tensors_mut(&join(prefix, "gamma"));
        t.extend(self.beta_map.named_tensors_mut(&join(prefix, "beta")));
        t.push((join(prefix, "running_mean"), &mut self.running_mean));
        t.push((join(prefix, "running_var"), &mut self.running_var));
        t
    }
}

/// Pre-activation residual block:
/// `out = x + fc2(relu(cbn2(fc1(relu(cbn1(x, c))), c)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub cbn1: CondBatchNorm,
    pub fc1: Linear,
    pub cbn2: CondBatchNorm,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct ResBlockCache {
    cbn1: CbnCache,
    pre1: Tensor,
    act1: Tensor,
    cbn2: CbnCache,
    pre2: Tensor,
    act2: Tensor,
}

impl ResBlock {
    pub fn new(width: usize, cond: usize, rng: &mut Rng) -> Self {
        Self {
            cbn1: CondBatchNorm::new(width, cond),
            fc1: Linear::new(width, width, rng),
            cbn2: CondBatchNorm::new(width, cond),
            fc2: Linear::new(width, width, rng),
        }
    }

    pub fn forward(
        &mut self,
        x: &Tensor,
        cond: &Tensor,
        mode: Mode,
        name: &str,
    ) -> Result<(Tensor, ResBlockCache)> {
        let (pre1, cbn1) = self.cbn1.forward(x, cond, mode, &format!("{name}.cbn1"))?;
        let act1 = relu(&pre1);
        let h = self.fc1.forward(&act1, &format!("{name}.fc1"))?;
        let (pre2, cbn2) = self.cbn2.forward(&h, cond, mode, &format!("{name}.cbn2"))?;
        let act2 = relu(&pre2);
        let mut out = self.fc2.forward(&act2, &format!("{name}.fc2"))?;
        out.add_assign(x);
        let cache = ResBlockCache {
            cbn1,
            pre1,
            act1,
            cbn2,
            pre2,
            act2,
        };
        Ok((out, cache))
    }

    pub fn infer(&self, x: &Tensor, cond: &Tensor, name: &str) -> Result<Tensor> {
        let h = relu(&self.cbn1.infer(x, cond, name)?);
        let h = self.fc1.forward(&h, name)?;
        let h = relu(&self.cbn2.infer(&h, cond, name)?);
        let mut out = self.fc2.forward(&h, name)?;
        out.add_assign(x);
        Ok(out)
    }

    /// Returns `(dL/dx, dL/dcond, parameter gradients)`.
    pub fn backward(
        &self,
        cache: &ResBlockCache,
        cond: &Tensor,
        grad: &Tensor,
    ) -> (Tensor, Tensor, Vec<Tensor>) {
        let (dact2, fc2_grads) = self.fc2.backward(&cache.act2, grad);
        let dpre2 = relu_backward(&cache.pre2, &dact2);
        let (dh, dcond2, cbn2_grads) = self.cbn2.backward(&cache.cbn2, cond, &dpre2);
        let (dact1, fc1_grads) = self.fc1.backward(&cache.act1, &dh);
        let dpre1 = relu_backward(&cache.pre1, &dact1);
        let (mut dx, mut dcond, mut grads) = self.cbn1.backward(&cache.cbn1, cond, &dpre1);
        dx.add_assign(grad);
        dcond.add_assign(&dcond2);
        grads.extend(fc1_grads);
        grads.extend(cbn2_grads);
        grads.extend(fc2_grads);
        (dx, dcond, grads)
    }
}

impl Module for ResBlock {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.cbn1.params();
        p.extend(self.fc1.params());
        p.extend(self.cbn2.params());
        p.extend(self.fc2.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.cbn1.params_mut();
        p.extend(self.fc1.params_mut());
        p.extend(self.cbn2.params_mut());
        p.extend(self.fc2.params_mut());
        p
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut t = self.cbn1.named_tensors(&join(prefix, "cbn1"));
        t.extend(self.fc1.named_tensors(&join(prefix, "fc1")));
        t.extend(self.cbn2.named_tensors(&join(prefix, "cbn2")));
        t.extend(self.fc2.named_tensors(&join(prefix, "fc2")));
        t
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut t = self.cbn1.named_tensors_mut(&join(prefix, "cbn1"));
        t.extend(self.fc1.named_tensors_mut(&join(prefix, "fc1")));
        t.extend(self.cbn2.named_tensors_mut(&join(prefix, "cbn2")));
        t.extend(self.fc2.named_tensors_mut(&join(prefix, "fc2")));
        t
    }
}
