use alloc::format;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of inverted-residual stages in the front end. Each halves the
/// frequency axis.
pub const DSM_STAGES: usize = 3;

/// Complete architectural description of an embedding network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub use_dsm: bool,
    pub use_plp: bool,
    pub use_tdnn: bool,
    pub dsm_channels: usize,
    pub expansion: usize,
    pub layers: [usize; 3],
    pub mid_channels: [usize; 3],
    pub out_channels: [usize; 3],
    pub dilations: [usize; 3],
    pub tdnn_kernel: usize,
    pub plp_window: usize,
    pub plp_hop: usize,
    pub se_bottleneck: usize,
    pub embedding_dim: usize,
}

/// Branch removed by an ablation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    /// Front end replaced by a single 1×1 temporal convolution.
    Dsm,
    /// Multi-granularity layers keep only the TDNN branch.
    Plp,
    /// Multi-granularity layers keep only the pooling branch.
    Tdnn,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Dsm, Ablation::Plp, Ablation::Tdnn];
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsm" => Ok(Ablation::Dsm),
            "plp" => Ok(Ablation::Plp),
            "tdnn" => Ok(Ablation::Tdnn),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?} (expected dsm, plp or tdnn)"
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Dsm => "dsm",
            Ablation::Plp => "plp",
            Ablation::Tdnn => "tdnn",
        })
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// Reference architecture: 80-bin input, 32-channel front end, blocks of
    /// [3, 6, 4] layers, 192-dimensional embedding.
    pub fn full() -> Self {
        Self {
            feature_dim: 80,
            use_dsm: true,
            use_plp: true,
            use_tdnn: true,
            dsm_channels: 32,
            expansion: 6,
            layers: [3, 6, 4],
            mid_channels: [64, 128, 256],
            out_channels: [128, 256, 512],
            dilations: [1, 2, 2],
            tdnn_kernel: 3,
            plp_window: 8,
            plp_hop: 4,
            se_bottleneck: 128,
            embedding_dim: 192,
        }
    }

    /// Quarter-width variant with blocks [1, 2, 1] that trains in minutes.
    pub fn desk_scale() -> Self {
        Self {
            dsm_channels: 8,
            layers: [1, 2, 1],
            mid_channels: [16, 32, 64],
            out_channels: [32, 64, 128],
            se_bottleneck: 32,
            ..Self::full()
        }
    }

    /// Tiny network used for finite-difference gradient checks.
    pub fn micro() -> Self {
        Self {
            dsm_channels: 2,
            layers: [1, 1, 1],
            mid_channels: [3, 4, 4],
            out_channels: [6, 6, 8],
            se_bottleneck: 4,
            embedding_dim: 8,
            ..Self::full()
        }
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::Dsm => self.use_dsm = false,
            Ablation::Plp => self.use_plp = false,
            Ablation::Tdnn => self.use_tdnn = false,
        }
        self
    }

    /// Frequency bins left after the front end's stride-2 stages.
    pub fn dsm_output_bins(&self) -> usize {
        (0..DSM_STAGES).fold(self.feature_dim, |f, _| f.div_ceil(2))
    }

    /// Width of the flattened channel×frequency sequence fed to the TDNN
    /// blocks (320 for the reference config).
    pub fn flat_width(&self) -> usize {
        self.dsm_channels * self.dsm_output_bins()
    }

    /// Channels of the concatenated multi-granularity feature for block `b`.
    pub fn fused_channels(&self, block: usize) -> usize {
        self.mid_channels[block] * (usize::from(self.use_tdnn) + usize::from(self.use_plp))
    }

    /// Input width of the statistics pooling layer's output.
    pub fn pooled_dim(&self) -> usize {
        2 * self.out_channels[2]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !self.use_plp && !self.use_tdnn {
            return bad("at least one of the PLP and TDNN branches must be enabled");
        }
        if self.feature_dim == 0 || self.dsm_channels == 0 || self.expansion == 0 {
            return bad("feature_dim, dsm_channels and expansion must be positive");
        }
        if self.layers.contains(&0)
            || self.mid_channels.contains(&0)
            || self.out_channels.contains(&0)
        {
            return bad("every block needs at least one layer and positive widths");
        }
        if self.dilations.contains(&0) {
            return bad("dilations must be positive");
        }
        if self.tdnn_kernel.is_multiple_of(2) {
            return bad("tdnn_kernel must be odd");
        }
        if self.plp_window == 0 || self.plp_hop * 2 != self.plp_window {
            return bad("plp_hop must be half of a positive plp_window");
        }
        if self.se_bottleneck == 0 || self.embedding_dim == 0 {
            return bad("se_bottleneck and embedding_dim must be positive");
        }
        Ok(())
    }
}
