//! Scale propagation normalization laboratory.
//!
//! A small deterministic tensor engine with reverse-mode differentiation, the
//! normalization layers compared in the scale-propagation study, the SPNet
//! depth-completion network built on them, moment calculators with Monte Carlo
//! certification, the training objective and metrics, and a synthetic
//! sparse-depth data pipeline.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gradcheck;
mod kernels;
pub mod moments;
pub mod norm;
pub mod objective;
pub mod optim;
pub mod params;
pub mod pfm;
pub mod spnet;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
