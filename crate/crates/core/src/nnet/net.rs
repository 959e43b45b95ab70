use super::layers::{relu, relu_backward, CbnCache, CondBatchNorm, Linear, Mode, Module, ResBlock, ResBlockCache};
use super::tensor::Tensor;
use crate::rng::Rng;
use crate::{Error, Result};

/// Residual network with conditional batch normalization:
/// `fc_in -> blocks -> cbn_out -> relu -> fc_out`, every normalization
/// conditioned on the same per-row vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CbnResNet {
    pub fc_in: Linear,
    pub blocks: Vec<ResBlock>,
    pub cbn_out: CondBatchNorm,
    pub fc_out: Linear,
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Tensor,
    cond: Tensor,
    blocks: Vec<ResBlockCache>,
    cbn_out: CbnCache,
    pre_out: Tensor,
    act_out: Tensor,
}

/// Gradients from a backward pass. `params` follows `Module::params` order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
    pub cond: Tensor,
}

impl CbnResNet {
    pub fn new(
        inputs: usize,
        cond: usize,
        hidden: usize,
        blocks: usize,
        outputs: usize,
        rng: &mut Rng,
    ) -> Self {
        Self {
            fc_in: Linear::new(inputs, hidden, rng),
            blocks: (0..blocks).map(|_| ResBlock::new(hidden, cond, rng)).collect(),
            cbn_out: CondBatchNorm::new(hidden, cond),
            fc_out: Linear::new(hidden, outputs, rng),
        }
    }

    pub fn input_width(&self) -> usize {
        self.fc_in.inputs()
    }

    pub fn cond_width(&self) -> usize {
        self.cbn_out.gamma_map.inputs()
    }

    pub fn output_width(&self) -> usize {
        self.fc_out.outputs()
    }

    fn check(&self, input: &Tensor, cond: &Tensor) -> Result<()> {
        if cond.cols() != self.cond_width() {
            return Err(Error::shape(
                "cond",
                format!(
                    "expected {} conditioning features, got {}",
                    self.cond_width(),
                    cond.cols()
                ),
            ));
        }
        if cond.rows() != input.rows() {
            return Err(Error::shape("cond", "row count differs from input"));
        }
        Ok(())
    }

    pub fn forward(&mut self, input: &Tensor, cond: &Tensor, mode: Mode) -> Result<(Tensor, Tape)> {
        self.check(input, cond)?;
        let mut h = self.fc_in.forward(input, "fc_in")?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let (out, cache) = block.forward(&h, cond, mode, &format!("block{i}"))?;
            h = out;
            caches.push(cache);
        }
        let (pre_out, cbn_out) = self.cbn_out.forward(&h, cond, mode, "cbn_out")?;
        let act_out = relu(&pre_out);
        let out = self.fc_out.forward(&act_out, "fc_out")?;
        let tape = Tape {
            input: input.clone(),
            cond: cond.clone(),
            blocks: caches,
            cbn_out,
            pre_out,
            act_out,
        };
        Ok((out, tape))
    }

    /// Evaluation-mode forward without a tape; never mutates.
    pub fn infer(&self, input: &Tensor, cond: &Tensor) -> Result<Tensor> {
        self.check(input, cond)?;
        let mut h = self.fc_in.forward(input, "fc_in")?;
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.infer(&h, cond, &format!("block{i}"))?;
        }
        let h = relu(&self.cbn_out.infer(&h, cond, "cbn_out")?);
        self.fc_out.forward(&h, "fc_out")
    }

    pub fn backward(&self, tape: &Tape, grad: &Tensor) -> Result<Gradients> {
        if grad.rows() != tape.input.rows() || grad.cols() != self.output_width() {
            return Err(Error::shape(
                "backward",
                format!(
                    "output gradient {:?} does not match output [{}, {}]",
                    grad.shape(),
                    tape.input.rows(),
                    self.output_width()
                ),
            ));
        }
        let (dact, fc_out_grads) = self.fc_out.backward(&tape.act_out, grad);
        let dpre = relu_backward(&tape.pre_out, &dact);
        let (mut dh, mut dcond, cbn_out_grads) =
            self.cbn_out.backward(&tape.cbn_out, &tape.cond, &dpre);

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, cache) in self.blocks.iter().zip(&tape.blocks).rev() {
            let (dx, dc, g) = block.backward(cache, &tape.cond, &dh);
            dh = dx;
            dcond.add_assign(&dc);
            block_grads.push(g);
        }
        block_grads.reverse();
        let (dinput, fc_in_grads) = self.fc_in.backward(&tape.input, &dh);

        let mut params = fc_in_grads;
        params.extend(block_grads.into_iter().flatten());
        params.extend(cbn_out_grads);
        params.extend(fc_out_grads);
        Ok(Gradients {
            params,
            input: dinput,
            cond: dcond,
        })
    }
}

impl Module for CbnResNet {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.fc_in.params();
        for b in &self.blocks {
            p.extend(b.params());
        }
        p.extend(self.cbn_out.params());
        p.extend(self.fc_out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.fc_in.params_mut();
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p.extend(self.cbn_out.params_mut());
        p.extend(self.fc_out.params_mut());
        p
    }

    fn named_tensors(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let p = |s: &str| {
            if prefix.is_empty() {
                s.to_string()
            } else {
                format!("{prefix}.{s}")
            }
        };
        let mut t = self.fc_in.named_tensors(&p("fc_in"));
        for (i, b) in self.blocks.iter().enumerate() {
            t.extend(b.named_tensors(&p(&format!("block{i}"))));
        }
        t.extend(self.cbn_out.named_tensors(&p("cbn_out")));
        t.extend(self.fc_out.named_tensors(&p("fc_out")));
        t
    }

    fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let p = |s: &str| {
            if prefix.is_empty() {
                s.to_string()
            } else {
                format!("{prefix}.{s}")
            }
        };
        let mut t = self.fc_in.named_tensors_mut(&p("fc_in"));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            t.extend(b.named_tensors_mut(&p(&format!("block{i}"))));
        }
        t.extend(self.cbn_out.named_tensors_mut(&p("cbn_out")));
        t.extend(self.fc_out.named_tensors_mut(&p("fc_out")));
        t
    }
}
