//! Phoneme-level max pooling and utterance statistics pooling.

use alloc::vec;
use alloc::vec::Vec;

use super::basic::sequence_layout;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::tensor::Tensor;

/// Variance floor inside the square root of the pooled standard deviation.
pub const STD_EPSILON: f64 = 1e-10;

/// Result of [`plp`]: pooled output plus, for every output element, the flat
/// input index it was taken from.
#[derive(Debug, Clone)]
pub struct PlpOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Overlapping sliding-window max pooling over time, broadcast back to every
/// frame.
///
/// Windows start at `0, hop, 2·hop, …` (every start `< T`) and cover
/// `[start, min(start + window, T))`. Each frame takes the larger of the
/// maxima of the windows that contain it, so the output has the input's
/// shape. Ties resolve to the earliest frame.
pub fn plp(x: &Tensor, window: usize, hop: usize) -> Result<PlpOutput> {
    if window == 0 || hop == 0 || hop > window {
        return Err(Error::invalid("plp", "need 0 < hop <= window"));
    }
    let (_, _, t, _) = sequence_layout("plp", x.shape())?;
    let starts: Vec<usize> = (0..t).step_by(hop).collect();
    let mut out = vec![0.0; x.numel()];
    let mut argmax = vec![0; x.numel()];
    let mut win_max: Vec<(f64, usize)> = Vec::with_capacity(starts.len());

    for (row_idx, row) in x.data().chunks_exact(t).enumerate() {
        let base = row_idx * t;
        win_max.clear();
        for &s in &starts {
            let end = (s + window).min(t);
            let mut best = (row[s], s);
            for (i, &v) in row.iter().enumerate().take(end).skip(s + 1) {
                if v > best.0 {
                    best = (v, i);
                }
            }
            win_max.push(best);
        }
        for f in 0..t {
            // Windows containing f are those with start in (f - window, f].
            let first = (f + 1).saturating_sub(window).div_ceil(hop);
            let last = f / hop;
            let mut best = win_max[first];
            for &cand in &win_max[first + 1..=last] {
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    best = cand;
                }
            }
            out[base + f] = best.0;
            argmax[base + f] = base + best.1;
        }
    }
    Ok(PlpOutput {
        output: Tensor::new(x.shape(), out)?,
        argmax,
    })
}

pub fn plp_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(input_shape);
    let gd = g.data_mut();
    for (&src, &go) in argmax.iter().zip(grad_out.data()) {
        gd[src] += go;
    }
    g
}

/// Per-channel temporal mean and standard deviation: `[N, C, T] -> [N, 2C]`
/// (means first). The deviation uses the population convention with
/// [`STD_EPSILON`] added under the root.
pub fn statistics_pooling(x: &Tensor) -> Result<Tensor> {
    let (n, c, t, batched) = sequence_layout("statistics_pooling", x.shape())?;
    let mut out = vec![0.0; n * 2 * c];
    for (row_idx, row) in x.data().chunks_exact(t).enumerate() {
        let (b, ch) = (row_idx / c, row_idx % c);
        let mean = row.iter().sum::<f64>() / t as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
        out[b * 2 * c + ch] = mean;
        out[b * 2 * c + c + ch] = sqrt(var + STD_EPSILON);
    }
    let shape: &[usize] = if batched { &[n, 2 * c] } else { &[2 * c] };
    Tensor::new(shape, out)
}

/// Gradient of [`statistics_pooling`] given its forward output.
pub fn statistics_pooling_backward(x: &Tensor, pooled: &Tensor, grad_out: &Tensor) -> Tensor {
    let t = *x.shape().last().expect("rank checked in forward");
    let c = x.shape()[x.rank() - 2];
    let mut g = Tensor::zeros(x.shape());
    let (pd, gd) = (pooled.data(), grad_out.data());
    for ((row_idx, row), grow) in x
        .data()
        .chunks_exact(t)
        .enumerate()
        .zip(g.data_mut().chunks_exact_mut(t))
    {
        let (b, ch) = (row_idx / c, row_idx % c);
        let mean = pd[b * 2 * c + ch];
        let std = pd[b * 2 * c + c + ch];
        let g_mean = gd[b * 2 * c + ch] / t as f64;
        let g_std = gd[b * 2 * c + c + ch] / (t as f64 * std);
        for (gv, &v) in grow.iter_mut().zip(row) {
            *gv = g_mean + g_std * (v - mean);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor {
        Tensor::new(&[1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn plp_constant_is_constant() {
        let x = Tensor::full(&[2, 13], 4.5);
        assert_eq!(plp(&x, 8, 4).unwrap().output, x);
    }

    #[test]
    fn plp_single_window_span() {
        let x = row(&[1.0, 3.0, 2.0, 5.0, 4.0, 4.0, 0.0, 7.0]);
        let y = plp(&x, 8, 4).unwrap().output;
        assert_eq!(y.data(), &[7.0; 8]);
    }

    #[test]
    fn plp_ramp() {
        let x = row(&(0..12).map(f64::from).collect::<Vec<_>>());
        let y = plp(&x, 8, 4).unwrap().output;
        let mut want = vec![7.0; 4];
        want.extend([11.0; 8]);
        assert_eq!(y.data(), want.as_slice());
    }

    #[test]
    fn plp_single_frame() {
        let x = row(&[-2.0]);
        assert_eq!(plp(&x, 8, 4).unwrap().output, x);
    }

    #[test]
    fn stats_pooling_values() {
        let x = Tensor::new(&[1, 1, 2], vec![1.0, 3.0]).unwrap();
        let y = statistics_pooling(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2]);
        assert!((y.data()[0] - 2.0).abs() < 1e-12);
        assert!((y.data()[1] - 1.0).abs() < 1e-9);

        let flat = Tensor::full(&[3, 5], 2.0);
        let y = statistics_pooling(&flat).unwrap();
        assert_eq!(&y.data()[..3], &[2.0; 3]);
        assert!(y.data()[3..].iter().all(|&s| s < 1e-4 && s.is_finite()));
    }
}
