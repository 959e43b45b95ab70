//! Dense network kernel with hand-written reverse-mode differentiation for
//! one architecture family: linear layers, conditional batch normalization,
//! pre-activation residual blocks and ReLU. Double precision throughout.

mod adam;
pub mod gradcheck;
mod layers;
mod net;
pub mod serialize;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layers::{
    relu, relu_backward, CbnCache, CondBatchNorm, Linear, Mode, Module, ResBlock, ResBlockCache,
    BN_EPS, BN_MOMENTUM,
};
pub use net::{CbnResNet, Gradients, Tape};
pub use tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
