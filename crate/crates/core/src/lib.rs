//! Lossless-attention facial expression network: tensors and reverse-mode
//! autodiff, the attention-augmented residual backbone, data rebalancing,
//! training and evaluation.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod backbone;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod llam;
pub mod metrics;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
