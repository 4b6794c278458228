//! Multi-granularity TDNN layers and blocks.
//!
//! A layer computes a 1-frame bottleneck `e`, then in parallel a dilated
//! TDNN view and a phoneme-level max-pooling view of `e`. The two views are
//! concatenated (TDNN channels first), gated per channel by a
//! squeeze-excitation MLP, projected to the output width and added to the
//! (possibly projected) layer input.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::Ops;
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::layers::{BatchNorm, Conv, ConvBn, Linear};
use crate::params::ParamStore;

/// Channel gate over the time-averaged fused feature.
#[derive(Debug, Clone)]
pub struct SeGate {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SeGate {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        channels: usize,
        bottleneck: usize,
    ) -> Self {
        Self {
            fc1: Linear::new(
                store,
                rng,
                &format!("{name}.fc1"),
                channels,
                bottleneck,
                true,
            ),
            fc2: Linear::new(
                store,
                rng,
                &format!("{name}.fc2"),
                bottleneck,
                channels,
                true,
            ),
        }
    }

    /// Gate values in (0, 1), one per channel (and batch item).
    pub fn gate<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        let z = o.mean_time(x)?;
        let h = self.fc1.forward(o, &z)?;
        let h = o.relu(&h);
        let s = self.fc2.forward(o, &h)?;
        Ok(o.sigmoid(&s))
    }

    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        let s = self.gate(o, x)?;
        o.scale_channels(x, &s)
    }
}

#[derive(Debug, Clone)]
pub struct MTdnnLayer {
    pub bottleneck: ConvBn,
    pub tdnn: Option<ConvBn>,
    pub plp: Option<(usize, usize)>,
    pub se: SeGate,
    pub out: ConvBn,
    pub shortcut: Option<Conv>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl MTdnnLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        cfg: &ModelConfig,
        in_ch: usize,
        mid: usize,
        out_ch: usize,
        dilation: usize,
    ) -> Result<Self> {
        let conv_bn =
            |store: &mut ParamStore, rng: &mut R, part: &str, i, o, k, d| -> Result<ConvBn> {
                Ok(ConvBn {
                    conv: Conv::temporal(store, rng, &format!("{name}.{part}.conv"), i, o, k, d)?,
                    bn: BatchNorm::new(store, &format!("{name}.{part}.bn"), o),
                })
            };
        let bottleneck = conv_bn(store, rng, "bottleneck", in_ch, mid, 1, 1)?;
        let tdnn = if cfg.use_tdnn {
            Some(conv_bn(
                store,
                rng,
                "tdnn",
                mid,
                mid,
                cfg.tdnn_kernel,
                dilation,
            )?)
        } else {
            None
        };
        let fused = mid * (usize::from(cfg.use_tdnn) + usize::from(cfg.use_plp));
        let se = SeGate::new(store, rng, &format!("{name}.se"), fused, cfg.se_bottleneck);
        let out = conv_bn(store, rng, "out", fused, out_ch, 1, 1)?;
        let shortcut = if in_ch != out_ch {
            Some(Conv::temporal(
                store,
                rng,
                &format!("{name}.shortcut"),
                in_ch,
                out_ch,
                1,
                1,
            )?)
        } else {
            None
        };
        Ok(Self {
            bottleneck,
            tdnn,
            plp: cfg.use_plp.then_some((cfg.plp_window, cfg.plp_hop)),
            se,
            out,
            shortcut,
            in_channels: in_ch,
            out_channels: out_ch,
        })
    }

    /// Concatenated TDNN and PLP views of the bottleneck output, before
    /// gating.
    pub fn branches<'p, O: Ops<'p>>(&self, o: &mut O, e: &O::Value) -> Result<O::Value> {
        let et = self
            .tdnn
            .as_ref()
            .map(|t| t.forward(o, e, true))
            .transpose()?;
        let ep = self.plp.map(|(w, h)| o.plp(e, w, h)).transpose()?;
        match (et, ep) {
            (Some(a), Some(b)) => o.concat(&[&a, &b], 1),
            (Some(a), None) | (None, Some(a)) => Ok(a),
            (None, None) => Err(Error::Config(
                "layer has neither TDNN nor PLP branch".into(),
            )),
        }
    }

    /// `[N, C_in, T] -> [N, C_out, T]`.
    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, y: &O::Value) -> Result<O::Value> {
        let shape = o.value(y).shape();
        if shape.len() != 3 || shape[1] != self.in_channels {
            return Err(Error::invalid(
                "mtdnn layer",
                format!(
                    "expected {} input channels, got shape {shape:?}",
                    self.in_channels
                ),
            ));
        }
        let e = self.bottleneck.forward(o, y, true)?;
        let cat = self.branches(o, &e)?;
        let ec = self.se.forward(o, &cat)?;
        let h = self.out.forward(o, &ec, true)?;
        let sum = match &self.shortcut {
            Some(proj) => {
                let r = proj.forward(o, y)?;
                o.add(&r, &h)?
            }
            None => o.add(y, &h)?,
        };
        Ok(o.relu(&sum))
    }
}

/// Stack of layers sharing one width and dilation.
#[derive(Debug, Clone)]
pub struct MTdnnBlock {
    pub layers: Vec<MTdnnLayer>,
}

impl MTdnnBlock {
    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        let mut layers = self.layers.iter();
        let first = layers
            .next()
            .ok_or_else(|| Error::Config("empty block".into()))?;
        let mut h = first.forward(o, x)?;
        for layer in layers {
            h = layer.forward(o, &h)?;
        }
        Ok(h)
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }
}

/// The three multi-granularity blocks.
#[derive(Debug, Clone)]
pub struct MTdnn {
    pub blocks: Vec<MTdnnBlock>,
    pub in_channels: usize,
}

impl MTdnn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        let mut in_ch = cfg.flat_width();
        let mut blocks = Vec::with_capacity(3);
        for b in 0..3 {
            let mut layers = Vec::with_capacity(cfg.layers[b]);
            for l in 0..cfg.layers[b] {
                let name = format!("mtdnn.block{}.layer{}", b + 1, l + 1);
                let layer = MTdnnLayer::new(
                    store,
                    rng,
                    &name,
                    cfg,
                    in_ch,
                    cfg.mid_channels[b],
                    cfg.out_channels[b],
                    cfg.dilations[b],
                )?;
                in_ch = cfg.out_channels[b];
                layers.push(layer);
            }
            blocks.push(MTdnnBlock { layers });
        }
        Ok(Self {
            blocks,
            in_channels: cfg.flat_width(),
        })
    }

    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        let mut h: Option<O::Value> = None;
        for (i, block) in self.blocks.iter().enumerate() {
            let next = block.forward(o, h.as_ref().unwrap_or(x))?;
            o.mark(["mtdnn_1", "mtdnn_2", "mtdnn_3"][i.min(2)], &next);
            h = Some(next);
        }
        h.ok_or_else(|| Error::Config("no blocks".into()))
    }
}
