//! Batch normalization over the channel axis.
//!
//! The channel axis is 1 for tensors of rank ≥ 2 (`[N, C, ...]`) and 0 for
//! vectors. Statistics are taken over every other axis, with the population
//! (divide-by-count) variance in both normalization and running updates.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::tensor::Tensor;

/// `(outer, channels, inner)` decomposition of a shape.
pub(crate) fn channel_layout(shape: &[usize]) -> (usize, usize, usize) {
    match shape.len() {
        0 => (1, 1, 1),
        1 => (1, shape[0], 1),
        _ => (shape[0], shape[1], shape[2..].iter().product()),
    }
}

/// Per-channel statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn check(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<(usize, usize, usize)> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid("batch_norm", "epsilon must be positive"));
    }
    let (outer, c, inner) = channel_layout(x.shape());
    if gamma.shape() != [c] {
        return Err(Error::shape("batch_norm gamma", &[c], gamma.shape()));
    }
    if beta.shape() != [c] {
        return Err(Error::shape("batch_norm beta", &[c], beta.shape()));
    }
    Ok((outer, c, inner))
}

#[inline]
fn for_channel(
    outer: usize,
    c: usize,
    inner: usize,
    ch: usize,
    mut f: impl FnMut(core::ops::Range<usize>),
) {
    for n in 0..outer {
        let start = (n * c + ch) * inner;
        f(start..start + inner);
    }
}

pub fn batch_norm_eval(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let (outer, c, inner) = check(x, gamma, beta, eps)?;
    if running_mean.shape() != [c] || running_var.shape() != [c] {
        return Err(Error::shape(
            "batch_norm running stats",
            &[c],
            running_mean.shape(),
        ));
    }
    let mut out = x.clone();
    let od = out.data_mut();
    for ch in 0..c {
        let scale = gamma.data()[ch] / sqrt(running_var.data()[ch] + eps);
        let mean = running_mean.data()[ch];
        let shift = beta.data()[ch];
        for_channel(outer, c, inner, ch, |r| {
            for v in &mut od[r] {
                *v = (*v - mean) * scale + shift;
            }
        });
    }
    Ok(out)
}

/// Gradients of [`batch_norm_eval`] with respect to input, gamma and beta.
pub fn batch_norm_eval_backward(
    x: &Tensor,
    gamma: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f64,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (outer, c, inner) = channel_layout(x.shape());
    let mut gx = grad_out.clone();
    let mut gg = vec![0.0; c];
    let mut gb = vec![0.0; c];
    let (xd, gd) = (x.data(), grad_out.data());
    let gxd = gx.data_mut();
    for ch in 0..c {
        let invstd = 1.0 / sqrt(running_var.data()[ch] + eps);
        let mean = running_mean.data()[ch];
        let scale = gamma.data()[ch] * invstd;
        for_channel(outer, c, inner, ch, |r| {
            for i in r {
                gg[ch] += gd[i] * (xd[i] - mean) * invstd;
                gb[ch] += gd[i];
                gxd[i] *= scale;
            }
        });
    }
    (gx, Tensor::from_vec(gg), Tensor::from_vec(gb))
}

pub fn batch_norm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, BatchStats)> {
    let (outer, c, inner) = check(x, gamma, beta, eps)?;
    let count = outer * inner;
    if count < 2 {
        return Err(Error::invalid(
            "batch_norm",
            "train mode needs more than one value per channel",
        ));
    }
    let xd = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for_channel(outer, c, inner, ch, |r| s += xd[r].iter().sum::<f64>());
        let m = s / count as f64;
        let mut q = 0.0;
        for_channel(outer, c, inner, ch, |r| {
            q += xd[r].iter().map(|v| (v - m) * (v - m)).sum::<f64>()
        });
        mean[ch] = m;
        var[ch] = q / count as f64;
    }
    let mut out = x.clone();
    let od = out.data_mut();
    for ch in 0..c {
        let scale = gamma.data()[ch] / sqrt(var[ch] + eps);
        let shift = beta.data()[ch];
        let m = mean[ch];
        for_channel(outer, c, inner, ch, |r| {
            for v in &mut od[r] {
                *v = (*v - m) * scale + shift;
            }
        });
    }
    Ok((out, BatchStats { mean, var }))
}

/// Gradients of [`batch_norm_train`], including the dependence of the batch
/// statistics on the input.
pub fn batch_norm_train_backward(
    x: &Tensor,
    gamma: &Tensor,
    stats: &BatchStats,
    eps: f64,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (outer, c, inner) = channel_layout(x.shape());
    let count = (outer * inner) as f64;
    let (xd, gd) = (x.data(), grad_out.data());
    let mut gx = Tensor::zeros(x.shape());
    let gxd = gx.data_mut();
    let mut gg = vec![0.0; c];
    let mut gb = vec![0.0; c];
    for ch in 0..c {
        let invstd = 1.0 / sqrt(stats.var[ch] + eps);
        let m = stats.mean[ch];
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for_channel(outer, c, inner, ch, |r| {
            for i in r {
                sum_g += gd[i];
                sum_gx += gd[i] * (xd[i] - m) * invstd;
            }
        });
        gg[ch] = sum_gx;
        gb[ch] = sum_g;
        let k = gamma.data()[ch] * invstd / count;
        for_channel(outer, c, inner, ch, |r| {
            for i in r {
                let xhat = (xd[i] - m) * invstd;
                gxd[i] = k * (count * gd[i] - sum_g - xhat * sum_gx);
            }
        });
    }
    (gx, Tensor::from_vec(gg), Tensor::from_vec(gb))
}

/// `running = (1 - momentum) * running + momentum * batch`.
pub fn update_running_stats(
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    stats: &BatchStats,
    momentum: f64,
) {
    for (r, &b) in running_mean.data_mut().iter_mut().zip(&stats.mean) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
    for (r, &b) in running_var.data_mut().iter_mut().zip(&stats.var) {
        *r = (1.0 - momentum) * *r + momentum * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(c: usize) -> Tensor {
        Tensor::full(&[c], 1.0)
    }

    #[test]
    fn eval_identity() {
        let x = Tensor::from_fn(&[2, 3, 4], |i| i as f64 - 7.0);
        let y = batch_norm_eval(
            &x,
            &ones(3),
            &Tensor::zeros(&[3]),
            &Tensor::zeros(&[3]),
            &ones(3),
            1e-12,
        )
        .unwrap();
        assert!(y.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn eval_affine() {
        let x = Tensor::from_vec(vec![3.0]);
        let y = batch_norm_eval(
            &x,
            &Tensor::from_vec(vec![2.0]),
            &Tensor::from_vec(vec![1.0]),
            &Tensor::zeros(&[1]),
            &ones(1),
            1e-12,
        )
        .unwrap();
        assert!((y.data()[0] - 7.0).abs() < 1e-9);
    }

    #[test]
    fn train_uses_population_variance() {
        let x = Tensor::new(&[1, 1, 2], vec![1.0, 3.0]).unwrap();
        let (y, stats) = batch_norm_train(&x, &ones(1), &Tensor::zeros(&[1]), 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9);
        assert!((y.data()[1] - 1.0).abs() < 1e-9);
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.var, vec![1.0]);
    }

    #[test]
    fn running_update_uses_momentum() {
        let mut m = Tensor::zeros(&[1]);
        let mut v = ones(1);
        let stats = BatchStats {
            mean: vec![2.0],
            var: vec![3.0],
        };
        update_running_stats(&mut m, &mut v, &stats, 0.1);
        assert!((m.data()[0] - 0.2).abs() < 1e-15);
        assert!((v.data()[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_epsilon_and_tiny_batches() {
        let x = Tensor::new(&[1, 1, 2], vec![1.0, 3.0]).unwrap();
        assert!(batch_norm_train(&x, &ones(1), &Tensor::zeros(&[1]), 0.0).is_err());
        assert!(batch_norm_eval(
            &x,
            &ones(1),
            &Tensor::zeros(&[1]),
            &Tensor::zeros(&[1]),
            &ones(1),
            -1.0
        )
        .is_err());
        let single = Tensor::new(&[1, 1, 1], vec![1.0]).unwrap();
        assert!(batch_norm_train(&single, &ones(1), &Tensor::zeros(&[1]), 1e-5).is_err());
    }

    #[test]
    fn eval_is_idempotent_with_matching_stats() {
        let x = Tensor::from_fn(&[3, 2, 5], |i| (i as f64 * 0.7).cos());
        let (g, b) = (ones(2), Tensor::zeros(&[2]));
        let (m, v) = (Tensor::zeros(&[2]), ones(2));
        let once = batch_norm_eval(&x, &g, &b, &m, &v, 1e-12).unwrap();
        let twice = batch_norm_eval(&once, &g, &b, &m, &v, 1e-12).unwrap();
        assert!(twice.max_abs_diff(&once) < 1e-10);
    }
}
