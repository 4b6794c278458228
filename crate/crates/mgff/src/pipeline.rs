//! Embedding extraction from audio files and trial scoring.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use mgff_core::scoring::{cosine_score, ScoredTrial, TrialList};
use mgff_core::{MgffTdnn, SpeakerEmbedding};

use crate::error::{Context, Error, Result};
use crate::fbank::FbankExtractor;
use crate::wav::read_wav;

pub fn embed_file(
    model: &MgffTdnn,
    extractor: &FbankExtractor,
    path: &Path,
) -> Result<SpeakerEmbedding> {
    let audio = read_wav(path).in_file(path)?;
    let features = extractor.extract(&audio).in_file(path)?;
    model.embed(&features).in_file(path)
}

/// Raw little-endian `f32` values, no header.
pub fn write_embedding(w: &mut impl Write, e: &SpeakerEmbedding) -> Result<()> {
    for &v in e.values() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_embedding(bytes: &[u8]) -> Result<SpeakerEmbedding> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Invalid(format!(
            "{} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(SpeakerEmbedding::new(values)?)
}

/// Embeds every utterance named in `trials` (paths relative to `root`)
/// across `threads` workers, then scores the trials in file order.
pub fn score_trials(
    model: &MgffTdnn,
    trials: &TrialList,
    root: &Path,
    threads: usize,
) -> Result<Vec<ScoredTrial>> {
    let utterances = trials.utterances();
    if utterances.is_empty() {
        return Ok(Vec::new());
    }
    let extractor = FbankExtractor::new();
    let threads = threads.clamp(1, utterances.len());
    let chunk = utterances.len().div_ceil(threads);
    let embedded: Vec<(&str, SpeakerEmbedding)> = std::thread::scope(|scope| {
        let handles: Vec<_> = utterances
            .chunks(chunk)
            .map(|part| {
                let extractor = &extractor;
                scope.spawn(move || {
                    part.iter()
                        .map(|&u| Ok((u, embed_file(model, extractor, &root.join(u))?)))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("embedding thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    let table: HashMap<&str, &SpeakerEmbedding> = embedded.iter().map(|(u, e)| (*u, e)).collect();
    trials
        .trials
        .iter()
        .map(|t| {
            let score = cosine_score(table[t.enroll.as_str()], table[t.test.as_str()])?;
            Ok(ScoredTrial {
                trial: t.clone(),
                score,
            })
        })
        .collect()
}
