//! Synthetic multi-speaker corpus.
//!
//! Each speaker is a source-filter "voice": a pulse train at the speaker's
//! pitch mixed with noise, shaped by four formant resonators and a spectral
//! tilt. Utterances perturb pitch, formants, gain and a syllable-rate
//! amplitude envelope, so crops of one speaker differ while the speaker's
//! spectral envelope stays recognisable.

use std::f64::consts::PI;

use mgff_core::train::Example;
use mgff_core::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::fbank::FbankExtractor;
use crate::wav::{AudioSignal, SAMPLE_RATE};

const FORMANT_BANDS: [(f64, f64); 4] = [
    (250.0, 900.0),
    (800.0, 2500.0),
    (2000.0, 3500.0),
    (3200.0, 5000.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub duration_secs: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_speakers: 10,
            utterances_per_speaker: 20,
            duration_secs: 3.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSignature {
    pub pitch_hz: f64,
    /// `(centre Hz, bandwidth Hz)` per resonator.
    pub formants: [(f64, f64); 4],
    /// Pole of the one-pole low-pass that sets the spectral tilt.
    pub tilt: f64,
    /// Fraction of the excitation coming from the pulse train.
    pub voicing: f64,
}

impl SpeakerSignature {
    pub fn random(rng: &mut impl Rng) -> Self {
        let formants =
            FORMANT_BANDS.map(|(lo, hi)| (rng.random_range(lo..hi), rng.random_range(60.0..250.0)));
        Self {
            pitch_hz: rng.random_range(90.0..260.0),
            formants,
            tilt: rng.random_range(0.3..0.95),
            voicing: rng.random_range(0.4..0.9),
        }
    }
}

/// Two-pole resonator with unit gain at DC removed by normalisation later.
struct Resonator {
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(centre: f64, bandwidth: f64) -> Self {
        let fs = SAMPLE_RATE as f64;
        let r = (-PI * bandwidth / fs).exp();
        Self {
            a1: 2.0 * r * (2.0 * PI * centre / fs).cos(),
            a2: -r * r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Renders one utterance of `voice`. The same `seed` gives the same samples.
pub fn render_utterance(
    voice: &SpeakerSignature,
    duration_secs: f64,
    seed: u64,
) -> Result<AudioSignal> {
    if duration_secs.is_nan() || duration_secs <= 0.0 {
        return Err(Error::Invalid("duration must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = SAMPLE_RATE as f64;
    let n = (duration_secs * fs).round() as usize;
    let jitter = Normal::new(0.0, 0.03).expect("valid deviation");
    let pitch = voice.pitch_hz * (1.0 + jitter.sample(&mut rng));
    let vibrato_hz = rng.random_range(2.0..5.0);
    let syllable_hz = rng.random_range(3.0..6.0);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let gain = rng.random_range(0.2..0.8);
    let mut resonators: Vec<Resonator> = voice
        .formants
        .iter()
        .map(|&(c, b)| Resonator::new(c * (1.0 + jitter.sample(&mut rng)), b))
        .collect();

    let mut out = Vec::with_capacity(n);
    let (mut cycle, mut tilt_state) = (0.0, 0.0);
    for i in 0..n {
        let t = i as f64 / fs;
        let f0 = pitch * (1.0 + 0.02 * (2.0 * PI * vibrato_hz * t).sin());
        cycle += f0 / fs;
        let pulse = if cycle >= 1.0 {
            cycle -= 1.0;
            1.0
        } else {
            0.0
        };
        let noise: f64 = StandardNormal.sample(&mut rng);
        let envelope = 0.55 + 0.45 * (2.0 * PI * syllable_hz * t + phase).sin();
        let mut x = envelope * (voice.voicing * pulse * 4.0 + (1.0 - voice.voicing) * 0.3 * noise);
        for r in &mut resonators {
            x = r.tick(x);
        }
        tilt_state = voice.tilt * tilt_state + (1.0 - voice.tilt) * x;
        out.push(tilt_state);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= gain / peak;
        }
    }
    Ok(AudioSignal::new(out, SAMPLE_RATE)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: usize,
    pub index: usize,
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub speakers: Vec<SpeakerSignature>,
    pub utterances: Vec<Utterance>,
}

/// Seed of utterance `index` of `speaker`, independent of generation order.
pub fn utterance_seed(base: u64, speaker: usize, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(
        base ^ ((speaker as u64) << 32 | index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    );
    rng.random()
}

pub fn speaker_signatures(cfg: &SyntheticConfig) -> Vec<SpeakerSignature> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.num_speakers)
        .map(|_| SpeakerSignature::random(&mut rng))
        .collect()
}

impl SyntheticDataset {
    pub fn generate(cfg: &SyntheticConfig) -> Result<Self> {
        if cfg.num_speakers < 2 {
            return Err(Error::Invalid(
                "a synthetic dataset needs at least two speakers".into(),
            ));
        }
        if cfg.utterances_per_speaker == 0 {
            return Err(Error::Invalid(
                "utterances_per_speaker must be positive".into(),
            ));
        }
        let speakers = speaker_signatures(cfg);
        let extractor = FbankExtractor::new();
        let jobs: Vec<(usize, usize)> = (0..cfg.num_speakers)
            .flat_map(|s| (0..cfg.utterances_per_speaker).map(move |u| (s, u)))
            .collect();
        let threads = std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(jobs.len());
        let chunk = jobs.len().div_ceil(threads);
        let utterances = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| {
                    let (speakers, extractor) = (&speakers, &extractor);
                    scope.spawn(move || {
                        part.iter()
                            .map(|&(s, u)| {
                                let audio = render_utterance(
                                    &speakers[s],
                                    cfg.duration_secs,
                                    utterance_seed(cfg.seed, s, u),
                                )?;
                                Ok(Utterance {
                                    speaker: s,
                                    index: u,
                                    features: extractor.extract(&audio)?,
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("generation thread panicked"))
                .collect::<Result<Vec<Vec<_>>>>()
        })?;
        Ok(Self {
            config: cfg.clone(),
            speakers,
            utterances: utterances.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Splits off the last `held_out` utterances of every speaker.
    pub fn split(&self, held_out: usize) -> (Vec<Example>, Vec<&Utterance>) {
        let keep = self.config.utterances_per_speaker.saturating_sub(held_out);
        let (train, test): (Vec<&Utterance>, Vec<&Utterance>) =
            self.utterances.iter().partition(|u| u.index < keep);
        let train = train
            .into_iter()
            .map(|u| Example {
                features: u.features.clone(),
                label: u.speaker,
            })
            .collect();
        (train, test)
    }

    /// Mean Euclidean distance between per-utterance mean frames, over
    /// same-speaker and over different-speaker pairs.
    pub fn separation(&self) -> (f64, f64) {
        let means: Vec<(usize, Vec<f64>)> = self
            .utterances
            .iter()
            .map(|u| (u.speaker, u.features.mean_frame()))
            .collect();
        let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0usize, 0usize);
        for (i, (si, a)) in means.iter().enumerate() {
            for (sj, b) in &means[i + 1..] {
                let d = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if si == sj {
                    intra += d;
                    ni += 1;
                } else {
                    inter += d;
                    nx += 1;
                }
            }
        }
        (intra / ni.max(1) as f64, inter / nx.max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            num_speakers: 3,
            utterances_per_speaker: 4,
            duration_secs: 0.5,
            seed: 11,
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = SyntheticDataset::generate(&small()).unwrap();
        let b = SyntheticDataset::generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = SyntheticDataset::generate(&SyntheticConfig {
            seed: 12,
            ..small()
        })
        .unwrap();
        assert_ne!(a.utterances[0].features, c.utterances[0].features);
    }

    #[test]
    fn item_count_and_frames() {
        let d = SyntheticDataset::generate(&SyntheticConfig {
            num_speakers: 10,
            utterances_per_speaker: 20,
            duration_secs: 0.1,
            seed: 0,
        })
        .unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.utterances.iter().all(|u| u.features.num_frames() == 8));
    }

    #[test]
    fn speakers_are_separable_in_feature_space() {
        let d = SyntheticDataset::generate(&SyntheticConfig {
            duration_secs: 1.0,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let (intra, inter) = d.separation();
        assert!(intra < inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn split_holds_out_per_speaker() {
        let d = SyntheticDataset::generate(&small()).unwrap();
        let (train, test) = d.split(1);
        assert_eq!(train.len(), 9);
        assert_eq!(test.len(), 3);
        assert!(test.iter().all(|u| u.index == 3));
    }

    #[test]
    fn rendered_audio_is_bounded() {
        let v = SpeakerSignature::random(&mut ChaCha8Rng::seed_from_u64(1));
        let a = render_utterance(&v, 0.25, 5).unwrap();
        assert_eq!(a.len(), 4000);
        assert!(a.samples().iter().all(|s| s.abs() <= 0.8));
        assert!(render_utterance(&v, 0.0, 5).is_err());
    }

    #[test]
    fn needs_two_speakers() {
        assert!(SyntheticDataset::generate(&SyntheticConfig {
            num_speakers: 1,
            ..small()
        })
        .is_err());
    }
}
