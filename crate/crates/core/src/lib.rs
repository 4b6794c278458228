//! Speaker-embedding network with a depthwise-separable front end and
//! multi-granularity TDNN layers.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: the dense tensor kernels and their reverse-mode
//! derivatives, the depthwise-separable front end, the multi-granularity TDNN
//! blocks, statistics pooling and the AAM-Softmax head, verification metrics,
//! closed-form complexity accounting and the SGD training loop.
//!
//! Audio decoding, filterbank extraction, weight files and the command line
//! live in the `mgff` companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autograd;
pub mod complexity;
pub mod config;
pub mod dsm;
pub mod error;
pub mod features;
pub mod head;
pub mod kernels;
pub mod layers;
mod math;
pub mod model;
pub mod mtdnn;
pub mod params;
pub mod scoring;
pub mod tensor;
pub mod train;

pub use autograd::{Eval, Mode, Ops, Tape, Var};
pub use config::{Ablation, ModelConfig};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, FEATURE_DIM};
pub use head::SpeakerEmbedding;
pub use model::MgffTdnn;
pub use params::{ParamId, ParamKind, ParamStore};
pub use tensor::Tensor;
