//! The complete embedding network.

use alloc::borrow::Cow;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Eval, Ops};
use crate::config::ModelConfig;
use crate::dsm::FrontEnd;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::head::{AamHead, EmbeddingHead, SpeakerEmbedding};
use crate::mtdnn::MTdnn;
use crate::params::{ParamKind, ParamStore};
use crate::tensor::Tensor;

/// Front end, multi-granularity blocks and embedding head, plus an optional
/// AAM classifier for training. All tensors live in [`MgffTdnn::store`].
#[derive(Debug, Clone)]
pub struct MgffTdnn {
    config: ModelConfig,
    store: ParamStore,
    frontend: FrontEnd,
    mtdnn: MTdnn,
    head: EmbeddingHead,
    classifier: Option<AamHead>,
    classifier_seed: u64,
}

impl MgffTdnn {
    /// Freshly initialised network; the same seed gives identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let frontend = FrontEnd::new(&mut store, &mut rng, &config)?;
        let mtdnn = MTdnn::new(&mut store, &mut rng, &config)?;
        let head = EmbeddingHead::new(
            &mut store,
            &mut rng,
            config.pooled_dim(),
            config.embedding_dim,
        );
        Ok(Self {
            config,
            store,
            frontend,
            mtdnn,
            head,
            classifier: None,
            classifier_seed: seed ^ 0x9e37_79b9_7f4a_7c15,
        })
    }

    /// Adds (or replaces the weights of) a `num_classes`-way AAM classifier.
    pub fn attach_classifier(&mut self, num_classes: usize) -> Result<()> {
        if num_classes == 0 {
            return Err(Error::Config("classifier needs at least one class".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.classifier_seed);
        match &self.classifier {
            Some(c) if c.num_classes == num_classes => {}
            Some(_) => {
                return Err(Error::Config(
                    "classifier already attached with a different class count".into(),
                ))
            }
            None => {
                self.classifier = Some(AamHead::new(
                    &mut self.store,
                    &mut rng,
                    num_classes,
                    self.config.embedding_dim,
                ));
            }
        }
        Ok(())
    }

    /// Builds a network from named tensors. Every parameter of the
    /// architecture must be supplied exactly once; a `classifier.weight`
    /// record attaches a classifier of matching size.
    pub fn from_named(config: ModelConfig, records: Vec<(String, Tensor)>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if let Some((_, w)) = records.iter().find(|(n, _)| n == AamHead::PARAM_NAME) {
            let classes = w.shape().first().copied().unwrap_or(0);
            model.attach_classifier(classes)?;
        }
        let mut seen = alloc::vec![false; model.store.len()];
        for (name, tensor) in records {
            let id = model
                .store
                .find(&name)
                .ok_or_else(|| Error::UnknownParam(name.clone()))?;
            if core::mem::replace(&mut seen[id.index()], true) {
                return Err(Error::CountMismatch(format!(
                    "parameter {name} given twice"
                )));
            }
            model.store.set(id, tensor)?;
        }
        let missing: Vec<&str> = model
            .store
            .ids()
            .filter(|id| !seen[id.index()])
            .map(|id| model.store.name(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::CountMismatch(format!(
                "missing parameters: {}",
                missing.join(", ")
            )));
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn classifier(&self) -> Option<&AamHead> {
        self.classifier.as_ref()
    }

    pub fn frontend(&self) -> &FrontEnd {
        &self.frontend
    }

    pub fn mtdnn(&self) -> &MTdnn {
        &self.mtdnn
    }

    pub fn head(&self) -> &EmbeddingHead {
        &self.head
    }

    /// Trainable scalars of the embedding network (classifier excluded).
    pub fn num_params(&self) -> usize {
        self.store.count(ParamKind::counts_toward_model)
    }

    /// `[N, 80, T] -> [N, D]` embeddings.
    pub fn forward<'p, O: Ops<'p>>(&self, o: &mut O, x: O::Value) -> Result<O::Value> {
        let h = self.frontend.forward(o, x)?;
        let h = self.mtdnn.forward(o, &h)?;
        self.head.forward(o, &h)
    }

    /// Embeddings of a batch followed by the mean AAM-Softmax loss.
    pub fn loss<'p, O: Ops<'p>>(
        &self,
        o: &mut O,
        x: O::Value,
        labels: &[usize],
    ) -> Result<O::Value> {
        let classifier = self
            .classifier
            .as_ref()
            .ok_or_else(|| Error::Config("no classifier attached".into()))?;
        let e = self.forward(o, x)?;
        classifier.loss(o, &e, labels)
    }

    /// Inference embedding of one utterance.
    pub fn embed(&self, features: &FeatureMatrix) -> Result<SpeakerEmbedding> {
        let t = features.num_frames();
        let x = features
            .values()
            .clone()
            .reshape(&[1, self.config.feature_dim, t])?;
        let mut o = Eval::new(&self.store);
        let e = self.forward(&mut o, Cow::Owned(x))?;
        SpeakerEmbedding::new(e.into_owned().into_data())
    }

    /// Labelled shapes of the intermediate activations for a `T`-frame
    /// input, batch axis dropped.
    pub fn shape_trace(&self, num_frames: usize) -> Result<Vec<(String, Vec<usize>)>> {
        let x = Tensor::zeros(&[1, self.config.feature_dim, num_frames]);
        let mut o = Eval::with_trace(&self.store);
        self.forward(&mut o, Cow::Owned(x))?;
        Ok(o.take_trace()
            .into_iter()
            .filter(|(label, _)| label != "pooling")
            .map(|(label, shape)| (label, shape[1..].to_vec()))
            .collect())
    }
}
