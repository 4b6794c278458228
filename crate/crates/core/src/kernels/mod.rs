//! Forward and backward kernels on plain [`Tensor`](crate::Tensor)s.
//!
//! These are the building blocks behind both execution backends in
//! [`autograd`](crate::autograd); they can also be called directly.

pub mod aam;
pub mod basic;
pub mod conv;
pub mod norm;
pub mod pool;

pub use aam::{aam_softmax, AamConfig, AamOutput};
pub use basic::{add, concat, linear, mean_time, mul, relu, scale_channels, sigmoid, split};
pub use conv::{conv, conv_backward, same_padding, ConvGrads, ConvSpec};
pub use norm::{batch_norm_eval, batch_norm_train, update_running_stats, BatchStats};
pub use pool::{plp, statistics_pooling, PlpOutput, STD_EPSILON};
