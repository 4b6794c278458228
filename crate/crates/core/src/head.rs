//! Utterance-level head: statistics pooling, FC + BN embedding layer and the
//! additive-angular-margin classifier used for training.

use alloc::vec::Vec;

use rand::Rng;

use crate::autograd::Ops;
use crate::error::{Error, Result};
use crate::kernels::aam::AamConfig;
use crate::layers::{BatchNorm, Linear};
use crate::math::sqrt;
use crate::params::{xavier_uniform, ParamId, ParamKind, ParamStore};

/// Fixed-length speaker representation compared by cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding(Vec<f64>);

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding", "no dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding", "non-finite value"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.0.iter().map(|v| v * v).sum())
    }
}

/// `[N, C, T] -> [N, D]`: mean and standard deviation pooling, then FC + BN.
#[derive(Debug, Clone)]
pub struct EmbeddingHead {
    pub fc: Linear,
    pub bn: BatchNorm,
}

impl EmbeddingHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        pooled_dim: usize,
        embedding_dim: usize,
    ) -> Self {
        Self {
            fc: Linear::new(store, rng, "head.fc", pooled_dim, embedding_dim, true),
            bn: BatchNorm::new(store, "head.bn", embedding_dim),
        }
    }

    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, h: &O::Value) -> Result<O::Value> {
        let pooled = o.statistics_pooling(h)?;
        o.mark("pooling", &pooled);
        let e = self.fc.forward(o, &pooled)?;
        let e = self.bn.forward(o, &e)?;
        o.mark("embedding", &e);
        Ok(e)
    }
}

/// Class-weight matrix `[K, D]` of the AAM-Softmax training objective.
#[derive(Debug, Clone)]
pub struct AamHead {
    pub weight: ParamId,
    pub num_classes: usize,
    pub config: AamConfig,
}

impl AamHead {
    pub const PARAM_NAME: &'static str = "classifier.weight";

    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        num_classes: usize,
        embedding_dim: usize,
    ) -> Self {
        let w = xavier_uniform(
            &[num_classes, embedding_dim],
            embedding_dim,
            num_classes,
            rng,
        );
        Self {
            weight: store.add(Self::PARAM_NAME, ParamKind::ClassWeight, w),
            num_classes,
            config: AamConfig::default(),
        }
    }

    /// Mean AAM-Softmax cross-entropy of `[N, D]` embeddings.
    pub fn loss<'p, O: Ops<'p>>(
        &self,
        o: &mut O,
        embeddings: &O::Value,
        labels: &[usize],
    ) -> Result<O::Value> {
        let w = o.param(self.weight);
        o.aam_softmax(embeddings, &w, labels, &self.config)
    }
}
