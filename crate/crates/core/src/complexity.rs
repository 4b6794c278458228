//! Closed-form parameter and operation counts.
//!
//! Counts are derived from a [`ModelConfig`] alone, without building the
//! network. Multiply-accumulates follow `output size × kernel area × input
//! channels / groups`, with one MAC counted as one FLOP. Element-wise work
//! (batch norm, activations, residual additions, pooling, gating) is kept in
//! a separate `aux_flops` column so it can be included or left out.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;

use crate::config::{ModelConfig, DSM_STAGES};
use crate::error::{Error, Result};
use crate::model::MgffTdnn;
use crate::params::ParamKind;

/// Number of frames used for headline FLOP figures (3 s at a 10 ms shift).
pub const REFERENCE_FRAMES: usize = 300;

/// Cost of one named layer. `name` is the prefix shared by the layer's
/// parameter tensors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub name: String,
    /// Trainable scalars: weights, biases, BN gamma and beta.
    pub params: usize,
    /// BN running means and variances.
    pub buffers: usize,
    pub macs: u64,
    pub aux_flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplexityReport {
    /// Frame count the operation columns were evaluated at, if any.
    pub frames: Option<usize>,
    pub layers: Vec<LayerCost>,
    pub total_params: usize,
    pub total_buffers: usize,
    pub total_macs: u64,
    pub total_aux_flops: u64,
}

impl ComplexityReport {
    fn from_layers(frames: Option<usize>, layers: Vec<LayerCost>) -> Self {
        Self {
            frames,
            total_params: layers.iter().map(|l| l.params).sum(),
            total_buffers: layers.iter().map(|l| l.buffers).sum(),
            total_macs: layers.iter().map(|l| l.macs).sum(),
            total_aux_flops: layers.iter().map(|l| l.aux_flops).sum(),
            layers,
        }
    }

    pub fn layer(&self, name: &str) -> Option<&LayerCost> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Headline FLOPs under the MAC = FLOP convention.
    pub fn flops(&self) -> u64 {
        self.total_macs
    }
}

/// Accumulates the parts of one layer.
struct Builder {
    t: u64,
    cost: LayerCost,
}

impl Builder {
    fn new(name: String, frames: usize) -> Self {
        Self {
            cost: LayerCost {
                name,
                params: 0,
                buffers: 0,
                macs: 0,
                aux_flops: 0,
            },
            t: frames as u64,
        }
    }

    /// Convolution over `out_positions` output positions per frame.
    fn conv(
        &mut self,
        c_in: usize,
        c_out: usize,
        groups: usize,
        area: usize,
        out_positions: usize,
        bias: bool,
    ) {
        self.cost.params += c_out * (c_in / groups) * area + if bias { c_out } else { 0 };
        self.cost.macs += (c_out * out_positions) as u64 * self.t * ((c_in / groups) * area) as u64;
    }

    /// Batch norm over `channels`, each with `positions` values per frame.
    fn bn(&mut self, channels: usize, positions: usize) {
        self.cost.params += 2 * channels;
        self.cost.buffers += 2 * channels;
        self.aux_per_frame(2 * channels * positions);
    }

    fn aux_per_frame(&mut self, per_frame: usize) {
        self.cost.aux_flops += per_frame as u64 * self.t;
    }

    fn linear(&mut self, in_dim: usize, out_dim: usize, bias: bool) {
        self.cost.params += in_dim * out_dim + if bias { out_dim } else { 0 };
        self.cost.macs += (in_dim * out_dim) as u64;
    }

    fn finish(self) -> LayerCost {
        self.cost
    }
}

fn layers(cfg: &ModelConfig, frames: usize) -> Result<Vec<LayerCost>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let width = cfg.flat_width();
    if cfg.use_dsm {
        let (c, f0) = (cfg.dsm_channels, cfg.feature_dim);
        let hidden = c * cfg.expansion;
        let mut b = Builder::new("dsm.stem".into(), frames);
        b.conv(1, c, 1, 9, f0, false);
        b.bn(c, f0);
        b.aux_per_frame(c * f0);
        out.push(b.finish());
        let mut f = f0;
        for s in 0..DSM_STAGES {
            let fo = f.div_ceil(2);
            let mut b = Builder::new(format!("dsm.stage{}", s + 1), frames);
            b.conv(c, hidden, 1, 1, f, false);
            b.bn(hidden, f);
            b.conv(hidden, hidden, hidden, 9, fo, false);
            b.bn(hidden, fo);
            b.conv(hidden, c, 1, 1, fo, false);
            b.bn(c, fo);
            // ReLUs after expansion, depthwise and output.
            b.aux_per_frame(hidden * f + hidden * fo + c * fo);
            out.push(b.finish());
            f = fo;
        }
    } else {
        let mut b = Builder::new("frontend".into(), frames);
        b.conv(cfg.feature_dim, width, 1, 1, 1, false);
        b.bn(width, 1);
        b.aux_per_frame(width);
        out.push(b.finish());
    }

    let mut c_in = width;
    for blk in 0..3 {
        let (mid, c_out) = (cfg.mid_channels[blk], cfg.out_channels[blk]);
        let fused = cfg.fused_channels(blk);
        for l in 0..cfg.layers[blk] {
            let mut b = Builder::new(format!("mtdnn.block{}.layer{}", blk + 1, l + 1), frames);
            b.conv(c_in, mid, 1, 1, 1, false);
            b.bn(mid, 1);
            b.aux_per_frame(mid);
            if cfg.use_tdnn {
                b.conv(mid, mid, 1, cfg.tdnn_kernel, 1, false);
                b.bn(mid, 1);
                b.aux_per_frame(mid);
            }
            if cfg.use_plp {
                // Window maxima plus the max over the two covering windows.
                b.aux_per_frame(mid * 3);
            }
            b.linear(fused, cfg.se_bottleneck, true);
            b.linear(cfg.se_bottleneck, fused, true);
            // Time mean and channel scaling.
            b.aux_per_frame(2 * fused);
            b.cost.aux_flops += (cfg.se_bottleneck + 4 * fused) as u64;
            b.conv(fused, c_out, 1, 1, 1, false);
            b.bn(c_out, 1);
            if c_in != c_out {
                b.conv(c_in, c_out, 1, 1, 1, false);
            }
            // Inner ReLU, residual addition, outer ReLU.
            b.aux_per_frame(3 * c_out);
            out.push(b.finish());
            c_in = c_out;
        }
    }

    let mut b = Builder::new("head".into(), frames);
    let pooled = cfg.pooled_dim();
    // Mean, centred square and sum for each pooled channel.
    b.aux_per_frame(3 * cfg.out_channels[2]);
    b.linear(pooled, cfg.embedding_dim, true);
    b.cost.params += 2 * cfg.embedding_dim;
    b.cost.buffers += 2 * cfg.embedding_dim;
    b.cost.aux_flops += 2 * cfg.embedding_dim as u64;
    out.push(b.finish());
    Ok(out)
}

/// Parameter counts per layer; operation columns are left at zero.
pub fn count_params(cfg: &ModelConfig) -> Result<ComplexityReport> {
    let mut ls = layers(cfg, 0)?;
    for l in &mut ls {
        l.macs = 0;
        l.aux_flops = 0;
    }
    Ok(ComplexityReport::from_layers(None, ls))
}

/// Parameter and operation counts for a `num_frames`-frame input.
pub fn count_flops(cfg: &ModelConfig, num_frames: usize) -> Result<ComplexityReport> {
    if num_frames == 0 {
        return Err(Error::invalid("count_flops", "num_frames must be positive"));
    }
    Ok(ComplexityReport::from_layers(
        Some(num_frames),
        layers(cfg, num_frames)?,
    ))
}

/// A layer whose analytic and instantiated sizes disagree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountDiff {
    pub layer: String,
    pub analytic: (usize, usize),
    pub instantiated: (usize, usize),
}

/// Builds the network for `cfg` and compares the per-layer (params,
/// buffers) pairs against [`count_params`]. Returns the report on an exact
/// match and the divergent layers otherwise.
pub fn verify_against_instantiation(cfg: &ModelConfig) -> Result<ComplexityReport, VerifyError> {
    let report = count_params(cfg).map_err(VerifyError::Model)?;
    let model = MgffTdnn::new(cfg.clone(), 0).map_err(VerifyError::Model)?;
    let store = model.store();
    let mut counted: Vec<(String, usize, usize)> = report
        .layers
        .iter()
        .map(|l| (l.name.clone(), 0, 0))
        .collect();
    for id in store.ids() {
        let name = store.name(id);
        let kind = store.kind(id);
        let n = store.get(id).numel();
        let layer = counted.iter().position(|(l, _, _)| {
            name.strip_prefix(l.as_str())
                .is_some_and(|r| r.starts_with('.'))
        });
        let idx = match layer {
            Some(i) => i,
            None => {
                counted.push((name.to_string(), 0, 0));
                counted.len() - 1
            }
        };
        match kind {
            ParamKind::BnRunningMean | ParamKind::BnRunningVar => counted[idx].2 += n,
            ParamKind::ClassWeight => {}
            _ => counted[idx].1 += n,
        }
    }
    let diffs: Vec<CountDiff> = counted
        .into_iter()
        .filter_map(|(name, p, b)| {
            let analytic = report
                .layer(&name)
                .map_or((0, 0), |l| (l.params, l.buffers));
            (analytic != (p, b)).then_some(CountDiff {
                layer: name,
                analytic,
                instantiated: (p, b),
            })
        })
        .collect();
    if diffs.is_empty() {
        Ok(report)
    } else {
        Err(VerifyError::Mismatch(diffs))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Model(Error),
    #[error("analytic and instantiated counts differ in {} layer(s): {}", .0.len(), describe(.0))]
    Mismatch(Vec<CountDiff>),
}

fn describe(diffs: &[CountDiff]) -> String {
    diffs
        .iter()
        .map(|d| {
            format!(
                "{} (analytic {}+{}, instantiated {}+{})",
                d.layer, d.analytic.0, d.analytic.1, d.instantiated.0, d.instantiated.1
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Ablation;

    #[test]
    fn single_pointwise_conv_macs() {
        let mut b = Builder::new("x".into(), 5);
        b.conv(2, 3, 1, 1, 1, false);
        assert_eq!(b.finish().macs, 30);
    }

    #[test]
    fn totals_are_sums() {
        let r = count_flops(&ModelConfig::full(), 300).unwrap();
        assert_eq!(r.total_macs, r.layers.iter().map(|l| l.macs).sum::<u64>());
        assert_eq!(
            r.total_params,
            r.layers.iter().map(|l| l.params).sum::<usize>()
        );
    }

    #[test]
    fn instantiation_matches_small_configs() {
        for cfg in [ModelConfig::micro(), ModelConfig::desk_scale()] {
            verify_against_instantiation(&cfg).unwrap();
            for a in Ablation::ALL {
                verify_against_instantiation(&cfg.clone().with_ablation(a)).unwrap();
            }
        }
    }

    #[test]
    fn mismatch_lists_layers() {
        let diffs = [CountDiff {
            layer: "head".into(),
            analytic: (1, 2),
            instantiated: (3, 2),
        }];
        let msg = alloc::string::ToString::to_string(&VerifyError::Mismatch(diffs.to_vec()));
        assert!(msg.contains("head (analytic 1+2, instantiated 3+2)"));
    }

    #[test]
    fn zero_frames_rejected() {
        assert!(count_flops(&ModelConfig::full(), 0).is_err());
    }
}
