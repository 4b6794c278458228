//! Log-mel feature matrices and training crops.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mel bins per frame.
pub const FEATURE_DIM: usize = 80;
pub const FRAME_LENGTH_MS: f64 = 25.0;
pub const FRAME_SHIFT_MS: f64 = 10.0;

/// `80 × T` log-mel filterbank energies of one utterance, bins-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Tensor,
}

impl FeatureMatrix {
    pub fn new(values: Tensor) -> Result<Self> {
        match values.shape() {
            [FEATURE_DIM, _] => Ok(Self { values }),
            s => Err(Error::shape(
                "feature matrix",
                &[FEATURE_DIM, s.last().copied().unwrap_or(0)],
                s,
            )),
        }
    }

    /// Builds from frame-major rows (`frames[t][bin]`).
    pub fn from_frames(frames: &[[f64; FEATURE_DIM]]) -> Result<Self> {
        let t = frames.len();
        if t == 0 {
            return Err(Error::invalid("feature matrix", "no frames"));
        }
        let mut data = alloc::vec![0.0; FEATURE_DIM * t];
        for (i, frame) in frames.iter().enumerate() {
            for (b, &v) in frame.iter().enumerate() {
                data[b * t + i] = v;
            }
        }
        Self::new(Tensor::new(&[FEATURE_DIM, t], data)?)
    }

    pub fn num_frames(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values.data()[bin * self.num_frames() + frame]
    }

    /// Per-bin mean over time.
    pub fn mean_frame(&self) -> Vec<f64> {
        let t = self.num_frames();
        self.values
            .data()
            .chunks_exact(t)
            .map(|row| row.iter().sum::<f64>() / t as f64)
            .collect()
    }

    /// `num_frames` consecutive frames starting at `offset`, wrapping around
    /// the end of the utterance.
    pub fn window(&self, offset: usize, num_frames: usize) -> Result<Self> {
        if num_frames == 0 {
            return Err(Error::invalid("crop", "num_frames must be positive"));
        }
        let t = self.num_frames();
        let mut data = Vec::with_capacity(FEATURE_DIM * num_frames);
        for row in self.values.data().chunks_exact(t) {
            data.extend((0..num_frames).map(|i| row[(offset + i) % t]));
        }
        Self::new(Tensor::new(&[FEATURE_DIM, num_frames], data)?)
    }
}

/// Random crop offset: uniform over `0..=T - num_frames`, or 0 when the
/// utterance is shorter than the crop.
pub fn crop_offset<R: Rng + ?Sized>(total: usize, num_frames: usize, rng: &mut R) -> usize {
    if total <= num_frames {
        0
    } else {
        rng.random_range(0..=total - num_frames)
    }
}

/// Contiguous `num_frames` crop; short utterances are wrap-padded by
/// repetition.
pub fn crop_with_rng<R: Rng + ?Sized>(
    f: &FeatureMatrix,
    num_frames: usize,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    if num_frames == 0 {
        return Err(Error::invalid("crop", "num_frames must be positive"));
    }
    let offset = crop_offset(f.num_frames(), num_frames, rng);
    f.window(offset, num_frames)
}

/// [`crop_with_rng`] with a fresh generator seeded from `seed`.
pub fn crop_random(f: &FeatureMatrix, num_frames: usize, seed: u64) -> Result<FeatureMatrix> {
    crop_with_rng(f, num_frames, &mut ChaCha8Rng::seed_from_u64(seed))
}
