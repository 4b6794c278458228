//! End-to-end training on the synthetic corpus.

use mgff_core::scoring::cosine_score;
use mgff_core::train::{train, Sgd, StepRecord, TrainConfig, TrainLog};
use mgff_core::{MgffTdnn, ModelConfig};

use crate::error::Result;
use crate::synth::{SyntheticConfig, SyntheticDataset, Utterance};

#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub model: ModelConfig,
    pub data: SyntheticConfig,
    pub train: TrainConfig,
    /// Utterances per speaker kept out of training for the cosine check.
    pub held_out: usize,
}

impl ToyConfig {
    /// Desk-scale network on ten synthetic speakers, 300 steps.
    pub fn desk(seed: u64) -> Self {
        Self {
            model: ModelConfig::desk_scale(),
            data: SyntheticConfig {
                seed,
                ..SyntheticConfig::default()
            },
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            held_out: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub model: MgffTdnn,
    pub sgd: Sgd,
    pub log: TrainLog,
    pub intra: f64,
    pub inter: f64,
}

/// Mean cosine over same-speaker pairs and over different-speaker pairs.
pub fn cosine_separation(model: &MgffTdnn, utterances: &[&Utterance]) -> Result<(f64, f64)> {
    let embs = utterances
        .iter()
        .map(|u| Ok((u.speaker, model.embed(&u.features)?)))
        .collect::<Result<Vec<_>>>()?;
    let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0usize, 0usize);
    for (i, (si, a)) in embs.iter().enumerate() {
        for (sj, b) in &embs[i + 1..] {
            let c = cosine_score(a, b)?;
            if si == sj {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    Ok((intra / ni.max(1) as f64, inter / nx.max(1) as f64))
}

pub fn run(cfg: &ToyConfig, on_step: impl FnMut(&StepRecord)) -> Result<ToyOutcome> {
    let data = SyntheticDataset::generate(&cfg.data)?;
    let (examples, held_out) = data.split(cfg.held_out);
    let mut model = MgffTdnn::new(cfg.model.clone(), cfg.train.seed)?;
    model.attach_classifier(cfg.data.num_speakers)?;
    let mut sgd = Sgd::new();
    let log = train(&mut model, &examples, &cfg.train, &mut sgd, on_step)?;
    let (intra, inter) = cosine_separation(&model, &held_out)?;
    Ok(ToyOutcome {
        model,
        sgd,
        log,
        intra,
        inter,
    })
}
