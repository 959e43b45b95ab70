//! Point-cloud generation with learned gradient fields of log-density.
//!
//! The crate is organised bottom-up:
//!
//! * [`cloud`], [`schedule`] and [`field`] hold the shared data types
//!   (point clouds, noise schedules, the [`ScoreField`] capability).
//! * [`analytic`] is the closed-form Gaussian-mixture score used as an oracle.
//! * [`nnet`] is a small dense network kernel with hand-written backward passes.
//! * [`model`] wires the encoder and conditional score decoder together and
//!   trains them with multi-level denoising score matching.
//! * [`sampler`] runs (annealed) Langevin dynamics over any score field.
//! * [`surface`] extracts iso-surfaces: sphere-traced renders and 2D contours.
//! * [`metrics`] implements CD, EMD, MMD, coverage and 1-NNA.
//! * [`data_io`] generates synthetic shapes and reads/writes point cloud files.

pub mod analytic;
pub mod cloud;
pub mod data_io;
mod error;
pub mod field;
pub mod metrics;
pub mod model;
pub mod nnet;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod surface;

pub use analytic::GmmField;
pub use cloud::{normalize_eval, normalize_unit_cube, BBoxTransform, PointCloud};
pub use error::{Error, Result};
pub use field::ScoreField;
pub use schedule::NoiseSchedule;
