//! Parameterised layers: convolution, batch normalization and affine maps.
//!
//! Each layer registers its tensors in a [`ParamStore`] under a dotted name
//! prefix and keeps only [`ParamId`] handles.

use alloc::format;

use rand::Rng;

use crate::autograd::Ops;
use crate::error::Result;
use crate::kernels::conv::ConvSpec;
use crate::params::{xavier_uniform, ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Convolution weights plus geometry. The kernel is `[O, I/g, K]` for 1-D
/// or `[O, I/g, KF, KT]` for 2-D layers.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
}

impl Conv {
    /// Registers `<name>.weight` (and `<name>.bias` when `bias`).
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        kernel_shape: &[usize],
        spec: ConvSpec,
        bias: bool,
    ) -> Self {
        let out = kernel_shape[0];
        let area: usize = kernel_shape[2..].iter().product();
        let fan_in = kernel_shape[1] * area;
        let fan_out = out * area;
        let w = xavier_uniform(kernel_shape, fan_in, fan_out, rng);
        let weight = store.add(format!("{name}.weight"), ParamKind::ConvWeight, w);
        let bias = bias.then(|| {
            store.add(
                format!("{name}.bias"),
                ParamKind::Bias,
                Tensor::zeros(&[out]),
            )
        });
        Self { weight, bias, spec }
    }

    /// 1-D convolution with same-length padding.
    pub fn temporal<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
    ) -> Result<Self> {
        let spec = ConvSpec::same_length(kernel, dilation)?;
        Ok(Self::new(
            store,
            rng,
            name,
            &[out_ch, in_ch, kernel],
            spec,
            false,
        ))
    }

    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        let w = o.param(self.weight);
        let b = self.bias.map(|b| o.param(b));
        o.conv(x, &w, b.as_ref(), &self.spec)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let c = [channels];
        Self {
            gamma: store.add(
                format!("{name}.gamma"),
                ParamKind::BnGamma,
                Tensor::full(&c, 1.0),
            ),
            beta: store.add(format!("{name}.beta"), ParamKind::BnBeta, Tensor::zeros(&c)),
            running_mean: store.add(
                format!("{name}.running_mean"),
                ParamKind::BnRunningMean,
                Tensor::zeros(&c),
            ),
            running_var: store.add(
                format!("{name}.running_var"),
                ParamKind::BnRunningVar,
                Tensor::full(&c, 1.0),
            ),
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        o.batch_norm(x, self)
    }
}

/// Convolution followed by batch normalization and, optionally, ReLU.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv,
    pub bn: BatchNorm,
}

impl ConvBn {
    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value, relu: bool) -> Result<O::Value> {
        let y = self.conv.forward(o, x)?;
        let y = self.bn.forward(o, &y)?;
        Ok(if relu { o.relu(&y) } else { y })
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Self {
        let w = xavier_uniform(&[out_dim, in_dim], in_dim, out_dim, rng);
        Self {
            weight: store.add(format!("{name}.weight"), ParamKind::LinearWeight, w),
            bias: bias.then(|| {
                store.add(
                    format!("{name}.bias"),
                    ParamKind::Bias,
                    Tensor::zeros(&[out_dim]),
                )
            }),
        }
    }

    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        let w = o.param(self.weight);
        let b = self.bias.map(|b| o.param(b));
        o.linear(x, &w, b.as_ref())
    }
}
