//! Desk-scale fine-grained video action recognition with a discriminative
//! filter bank head.
//!
//! The model has three classification branches over a small stage-based CNN:
//! a global-average branch, a bank of per-class discriminative filters with
//! cross-channel pooling, and a detail-preserving local branch (duplicated
//! final stage, bilinear 2x upsampling, stage-4 skip). Everything is built on
//! an in-crate tensor type and a reverse-mode tape, verified by a
//! finite-difference gradient-check harness, and exercised end to end on
//! synthetic fine-grained clips.

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod head;
pub mod localize;
pub mod model;
pub mod ops;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod vten;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::{Dtype, Scalar};
pub use tensor::Tensor;
