//! Depthwise-separable time-frequency front end.
//!
//! `[N, 80, T]` features are lifted to a single-channel image, passed through
//! a 3×3 stem and three inverted-residual stages that stride the frequency
//! axis by 2, and flattened channel-major into a `[N, C·F, T]` sequence.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::Ops;
use crate::config::{ModelConfig, DSM_STAGES};
use crate::error::{Error, Result};
use crate::kernels::conv::ConvSpec;
use crate::layers::{BatchNorm, Conv, ConvBn};
use crate::params::ParamStore;

/// Pointwise expansion, 3×3 depthwise convolution and pointwise projection.
#[derive(Debug, Clone)]
pub struct InvertedResidual {
    pub expand: ConvBn,
    pub depthwise: ConvBn,
    pub project: ConvBn,
    pub channels: usize,
    pub stride: usize,
}

impl InvertedResidual {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        channels: usize,
        expansion: usize,
        stride: usize,
    ) -> Self {
        let hidden = channels * expansion;
        let pw = ConvSpec::default();
        let dw = ConvSpec {
            stride: [stride, 1],
            padding: [1, 1],
            dilation: [1, 1],
            groups: hidden,
        };
        let conv_bn =
            |store: &mut ParamStore, rng: &mut R, part: &str, shape: &[usize], spec| ConvBn {
                conv: Conv::new(
                    store,
                    rng,
                    &format!("{name}.{part}.conv"),
                    shape,
                    spec,
                    false,
                ),
                bn: BatchNorm::new(store, &format!("{name}.{part}.bn"), shape[0]),
            };
        Self {
            expand: conv_bn(store, rng, "expand", &[hidden, channels, 1, 1], pw),
            depthwise: conv_bn(store, rng, "depthwise", &[hidden, 1, 3, 3], dw),
            project: conv_bn(store, rng, "project", &[channels, hidden, 1, 1], pw),
            channels,
            stride,
        }
    }

    /// `[N, C, F, T] -> [N, C, ceil(F / s), T]`. The identity shortcut is
    /// only applied at stride 1, where the shapes agree.
    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: &O::Value) -> Result<O::Value> {
        let shape = o.value(x).shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::shape(
                "inverted residual",
                &[shape[0], self.channels, 0, 0],
                shape,
            ));
        }
        let h = self.expand.forward(o, x, true)?;
        let h = self.depthwise.forward(o, &h, true)?;
        let h = self.project.forward(o, &h, false)?;
        if self.stride == 1 {
            let sum = o.add(x, &h)?;
            Ok(o.relu(&sum))
        } else {
            Ok(o.relu(&h))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dsm {
    pub stem: ConvBn,
    pub stages: Vec<InvertedResidual>,
    pub feature_dim: usize,
    pub channels: usize,
}

impl Dsm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, cfg: &ModelConfig) -> Self {
        let c = cfg.dsm_channels;
        let stem_spec = ConvSpec {
            padding: [1, 1],
            ..ConvSpec::default()
        };
        let stem = ConvBn {
            conv: Conv::new(store, rng, "dsm.stem.conv", &[c, 1, 3, 3], stem_spec, false),
            bn: BatchNorm::new(store, "dsm.stem.bn", c),
        };
        let stages = (0..DSM_STAGES)
            .map(|i| {
                InvertedResidual::new(
                    store,
                    rng,
                    &format!("dsm.stage{}", i + 1),
                    c,
                    cfg.expansion,
                    2,
                )
            })
            .collect();
        Self {
            stem,
            stages,
            feature_dim: cfg.feature_dim,
            channels: c,
        }
    }

    /// `[N, 80, T] -> [N, C·F', T]`.
    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: O::Value) -> Result<O::Value> {
        let shape = o.value(&x).shape().to_vec();
        let [n, f, t] = shape[..] else {
            return Err(Error::invalid(
                "dsm",
                format!("expected [N, F, T], got {shape:?}"),
            ));
        };
        if f != self.feature_dim {
            return Err(Error::shape("dsm", &[n, self.feature_dim, t], &shape));
        }
        let x = o.reshape(x, &[n, 1, f, t])?;
        o.mark("unsqueeze", &x);
        let mut h = self.stem.forward(o, &x, true)?;
        o.mark("conv_1", &h);
        for (i, stage) in self.stages.iter().enumerate() {
            h = stage.forward(o, &h)?;
            o.mark(["resnet_1", "resnet_2", "resnet_3"][i.min(2)], &h);
        }
        let s = o.value(&h).shape().to_vec();
        let flat = o.reshape(h, &[s[0], s[1] * s[2], s[3]])?;
        o.mark("reshape", &flat);
        Ok(flat)
    }
}

/// Front end of the network: the depthwise-separable module, or for the
/// ablation a single 1-frame-context convolution to the same width.
#[derive(Debug, Clone)]
pub enum FrontEnd {
    Dsm(Dsm),
    Bypass(ConvBn),
}

impl FrontEnd {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        Ok(if cfg.use_dsm {
            FrontEnd::Dsm(Dsm::new(store, rng, cfg))
        } else {
            FrontEnd::Bypass(ConvBn {
                conv: Conv::temporal(
                    store,
                    rng,
                    "frontend.conv",
                    cfg.feature_dim,
                    cfg.flat_width(),
                    1,
                    1,
                )?,
                bn: BatchNorm::new(store, "frontend.bn", cfg.flat_width()),
            })
        })
    }

    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: O::Value) -> Result<O::Value> {
        match self {
            FrontEnd::Dsm(dsm) => dsm.forward(o, x),
            FrontEnd::Bypass(proj) => {
                let y = proj.forward(o, &x, true)?;
                o.mark("reshape", &y);
                Ok(y)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Eval;
    use crate::tensor::Tensor;
    use alloc::borrow::Cow;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_all(store: &mut ParamStore) {
        use crate::params::ParamKind::*;
        for id in store.ids().collect::<Vec<_>>() {
            if matches!(store.kind(id), ConvWeight | LinearWeight | Bias) {
                let shape = store.get(id).shape().to_vec();
                store.set(id, Tensor::zeros(&shape)).unwrap();
            }
        }
    }

    #[test]
    fn stride_two_block_halves_frequency() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = InvertedResidual::new(&mut store, &mut rng, "b", 32, 6, 2);
        let x = Tensor::from_fn(&[1, 32, 80, 3], |i| (i % 7) as f64 - 3.0);
        let mut o = Eval::new(&store);
        let y = block.forward(&mut o, &Cow::Owned(x)).unwrap();
        assert_eq!(y.shape(), &[1, 32, 40, 3]);
        assert!(y.is_finite());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let block = InvertedResidual::new(&mut store, &mut rng, "b", 4, 6, 2);
        zero_all(&mut store);
        let x = Tensor::from_fn(&[1, 4, 8, 5], |i| i as f64);
        let y = block
            .forward(&mut Eval::new(&store), &Cow::Owned(x))
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_chain_doubles_positive_part() {
        // Stride 1 with every convolution selecting channel c into c (the
        // depthwise kernel is a centred delta): output = ReLU(x + ReLU(x)).
        let (c, t) = (3, 6);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut block = InvertedResidual::new(&mut store, &mut rng, "b", c, 6, 1);
        let hidden = c * 6;
        let expand = Tensor::from_fn(
            &[hidden, c, 1, 1],
            |i| if i / c == i % c { 1.0 } else { 0.0 },
        );
        let dw = Tensor::from_fn(&[hidden, 1, 3, 3], |i| if i % 9 == 4 { 1.0 } else { 0.0 });
        let project = Tensor::from_fn(&[c, hidden, 1, 1], |i| {
            if i / hidden == i % hidden {
                1.0
            } else {
                0.0
            }
        });
        store.set(block.expand.conv.weight, expand).unwrap();
        store.set(block.depthwise.conv.weight, dw).unwrap();
        store.set(block.project.conv.weight, project).unwrap();
        for bn in [
            &mut block.expand.bn,
            &mut block.depthwise.bn,
            &mut block.project.bn,
        ] {
            bn.eps = 1e-14;
        }
        let x = Tensor::from_fn(&[1, c, 5, t], |i| (i as f64 * 0.61).sin() * 2.0);
        let y = block
            .forward(&mut Eval::new(&store), &Cow::Owned(x.clone()))
            .unwrap();
        let want = x.map(|v| (2.0 * v).max(0.0));
        assert!(y.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn dsm_shapes_and_zero_input() {
        let cfg = ModelConfig::full();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dsm = Dsm::new(&mut store, &mut rng, &cfg);
        for t in [1, 5] {
            let mut o = Eval::with_trace(&store);
            let y = dsm
                .forward(&mut o, Cow::Owned(Tensor::zeros(&[1, 80, t])))
                .unwrap();
            assert_eq!(y.shape(), &[1, 320, t]);
            assert!(y.data().iter().all(|&v| v == 0.0));
            let trace = o.take_trace();
            let shapes: Vec<&[usize]> = trace.iter().map(|(_, s)| s.as_slice()).collect();
            assert_eq!(
                shapes,
                [
                    &[1, 1, 80, t][..],
                    &[1, 32, 80, t],
                    &[1, 32, 40, t],
                    &[1, 32, 20, t],
                    &[1, 32, 10, t],
                    &[1, 320, t]
                ]
            );
        }
    }

    #[test]
    fn rejects_wrong_feature_dim() {
        let cfg = ModelConfig::full();
        let mut store = ParamStore::new();
        let dsm = Dsm::new(&mut store, &mut ChaCha8Rng::seed_from_u64(0), &cfg);
        let r = dsm.forward(
            &mut Eval::new(&store),
            Cow::Owned(Tensor::zeros(&[1, 40, 4])),
        );
        assert!(r.is_err());
    }
}
