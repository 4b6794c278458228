//! SGD training with a warmup + cosine learning-rate schedule.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{BnUpdate, Mode, Ops, Tape};
use crate::error::{Error, Result};
use crate::features::{crop_with_rng, FeatureMatrix, FEATURE_DIM};
use crate::kernels::update_running_stats;
use crate::math::cos;
use crate::model::MgffTdnn;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub crop_frames: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 0.1,
            lr_min: 1e-4,
            momentum: 0.9,
            weight_decay: 1e-4,
            warmup_steps: 10,
            total_steps: 300,
            batch_size: 8,
            crop_frames: 298,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_init) {
            return bad("need 0 < lr_min < lr_init");
        }
        if self.warmup_steps >= self.total_steps {
            return bad("warmup_steps must be below total_steps");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("momentum must lie in [0, 1) and weight_decay must be non-negative");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch-norm statistics");
        }
        if self.crop_frames == 0 {
            return bad("crop_frames must be positive");
        }
        Ok(())
    }
}

/// Learning rate at `step` in `0..=total_steps`: a linear ramp from 0 to
/// `lr_init` over the warmup, then a half cosine down to `lr_min`.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(Error::invalid(
            "lr_schedule",
            format!("step {step} beyond total_steps {}", cfg.total_steps),
        ));
    }
    if step <= cfg.warmup_steps {
        if cfg.warmup_steps == 0 {
            return Ok(cfg.lr_init);
        }
        return Ok(cfg.lr_init * step as f64 / cfg.warmup_steps as f64);
    }
    let progress = (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    Ok(cfg.lr_min
        + (cfg.lr_init - cfg.lr_min) * (1.0 + cos(core::f64::consts::PI * progress)) / 2.0)
}

/// `v = momentum·v + g + wd·p; p -= lr·v`.
pub fn sgd_update(
    param: &mut Tensor,
    grad: &Tensor,
    velocity: &mut Tensor,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if grad.shape() != param.shape() {
        return Err(Error::shape("sgd", param.shape(), grad.shape()));
    }
    if velocity.shape() != param.shape() {
        return Err(Error::shape(
            "sgd velocity",
            param.shape(),
            velocity.shape(),
        ));
    }
    for ((p, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum buffers for every trainable tensor of a [`ParamStore`].
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    velocity: Vec<Option<Tensor>>,
}

impl Sgd {
    pub fn new() -> Self {
        Self::default()
    }

    /// Restores buffers saved with [`Sgd::velocities`].
    pub fn from_velocities(velocity: Vec<Option<Tensor>>) -> Self {
        Self { velocity }
    }

    pub fn velocities(&self) -> &[Option<Tensor>] {
        &self.velocity
    }

    /// Updates each trainable parameter that has a gradient. Weight decay
    /// applies only to convolution, linear and class weights.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[Option<Tensor>],
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::CountMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        self.velocity.resize_with(store.len(), || None);
        for id in store.ids().collect::<Vec<_>>() {
            let kind = store.kind(id);
            let Some(g) = &grads[id.index()] else {
                continue;
            };
            if !kind.is_trainable() {
                continue;
            }
            let p = store.get_mut(id);
            let v = self.velocity[id.index()].get_or_insert_with(|| Tensor::zeros(p.shape()));
            let wd = if kind.decays() { weight_decay } else { 0.0 };
            sgd_update(p, g, v, lr, momentum, wd)?;
        }
        Ok(())
    }
}

/// Folds train-mode batch statistics into the running buffers.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) -> Result<()> {
    for u in updates {
        let mut mean = store.get(u.running_mean).clone();
        let mut var = store.get(u.running_var).clone();
        update_running_stats(&mut mean, &mut var, &u.stats, u.momentum);
        store.set(u.running_mean, mean)?;
        store.set(u.running_var, var)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    /// Trailing mean of the loss over at most `window` steps.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        let losses: Vec<f64> = self.steps.iter().map(|s| s.loss).collect();
        (0..losses.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                losses[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
            })
            .collect()
    }

    /// Mean loss of the first and of the last `window` steps.
    pub fn initial_and_final(&self, window: usize) -> Option<(f64, f64)> {
        let n = self.steps.len();
        if n == 0 {
            return None;
        }
        let w = window.clamp(1, n);
        let mean = |s: &[StepRecord]| s.iter().map(|r| r.loss).sum::<f64>() / s.len() as f64;
        Some((mean(&self.steps[..w]), mean(&self.steps[n - w..])))
    }

    /// One `step lr loss` line per step.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let _ = writeln!(out, "{} {:.6} {:.6}", s.step, s.lr, s.loss);
        }
        out
    }
}

/// Labelled utterance used for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: FeatureMatrix,
    pub label: usize,
}

/// Stacks random crops of `items` into a `[N, 80, crop]` batch.
pub fn make_batch(
    items: &[&Example],
    crop: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Vec<usize>)> {
    let mut data = Vec::with_capacity(items.len() * FEATURE_DIM * crop);
    let mut labels = Vec::with_capacity(items.len());
    for item in items {
        let c = crop_with_rng(&item.features, crop, rng)?;
        data.extend_from_slice(c.values().data());
        labels.push(item.label);
    }
    Ok((
        Tensor::new(&[items.len(), FEATURE_DIM, crop], data)?,
        labels,
    ))
}

/// One forward/backward pass on a batch. Returns the loss, the parameter
/// gradients and the batch-norm statistics to fold in.
pub fn loss_and_grads(
    model: &MgffTdnn,
    batch: Tensor,
    labels: &[usize],
) -> Result<(f64, Vec<Option<Tensor>>, Vec<BnUpdate>)> {
    let mut tape = Tape::new(model.store(), Mode::Train);
    let x = tape.input(batch);
    let loss = model.loss(&mut tape, x, labels)?;
    let value = tape.value(&loss).data()[0];
    tape.backward(loss)?;
    Ok((value, tape.param_grads(), tape.bn_updates().to_vec()))
}

/// Trains `model` (which must carry a classifier) on `data` for
/// `cfg.total_steps` steps of shuffled mini-batches. `on_step` sees every
/// record as it is produced.
pub fn train(
    model: &mut MgffTdnn,
    data: &[Example],
    cfg: &TrainConfig,
    sgd: &mut Sgd,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    let classes = model
        .classifier()
        .ok_or_else(|| Error::Config("model has no classifier".into()))?
        .num_classes;
    if data.len() < cfg.batch_size {
        return Err(Error::Config(format!(
            "{} examples cannot fill a batch of {}",
            data.len(),
            cfg.batch_size
        )));
    }
    if let Some(bad) = data.iter().find(|e| e.label >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad.label,
            classes,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut log = TrainLog::default();
    for step in 1..=cfg.total_steps {
        let mut picked = Vec::with_capacity(cfg.batch_size);
        while picked.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            picked.push(&data[order[cursor]]);
            cursor += 1;
        }
        let (batch, labels) = make_batch(&picked, cfg.crop_frames, &mut rng)?;
        let (loss, grads, bn) = loss_and_grads(model, batch, &labels)?;
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, loss });
        }
        let lr = lr_schedule(step, cfg)?;
        apply_bn_updates(model.store_mut(), &bn)?;
        sgd.step(
            model.store_mut(),
            &grads,
            lr,
            cfg.momentum,
            cfg.weight_decay,
        )?;
        let record = StepRecord { step, lr, loss };
        on_step(&record);
        log.steps.push(record);
    }
    Ok(log)
}
