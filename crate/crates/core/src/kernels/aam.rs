//! Additive angular margin softmax (AAM-Softmax) cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{acos, cos, exp, ln, sin, sqrt};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AamConfig {
    /// Additive angular margin in radians.
    pub margin: f64,
    pub scale: f64,
}

impl Default for AamConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            scale: 32.0,
        }
    }
}

/// Loss value with its gradients for a unit upstream gradient.
#[derive(Debug, Clone)]
pub struct AamOutput {
    pub loss: f64,
    pub grad_embeddings: Tensor,
    pub grad_weights: Tensor,
}

fn normalize_rows(op: &'static str, x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.shape()[1];
    let mut unit = Vec::with_capacity(x.numel());
    let mut norms = Vec::with_capacity(x.shape()[0]);
    for r in x.data().chunks_exact(d) {
        let n = sqrt(r.iter().map(|v| v * v).sum());
        if n.is_nan() || n <= 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm(op));
        }
        unit.extend(r.iter().map(|v| v / n));
        norms.push(n);
    }
    Ok((unit, norms))
}

/// Back-propagates through `u = x / |x|` row-wise.
fn unnormalize_grad(unit: &[f64], norms: &[f64], grad_unit: &[f64], d: usize) -> Vec<f64> {
    let mut g = vec![0.0; unit.len()];
    for (((gr, ur), gu), &n) in g
        .chunks_exact_mut(d)
        .zip(unit.chunks_exact(d))
        .zip(grad_unit.chunks_exact(d))
        .zip(norms)
    {
        let proj: f64 = ur.iter().zip(gu).map(|(a, b)| a * b).sum();
        for i in 0..d {
            gr[i] = (gu[i] - ur[i] * proj) / n;
        }
    }
    g
}

/// Batch-mean AAM-Softmax loss of `embeddings: [N, D]` against class
/// weights `[K, D]`.
///
/// The target logit is `s·cos(θ + m)`; when `θ + m` would exceed π it falls
/// back to `s·(cos θ − m·sin m)` so the logit stays monotone in θ.
pub fn aam_softmax(
    embeddings: &Tensor,
    weights: &Tensor,
    labels: &[usize],
    cfg: &AamConfig,
) -> Result<AamOutput> {
    let [n, d] = embeddings.shape() else {
        return Err(Error::invalid("aam_softmax", "embeddings must be [N, D]"));
    };
    let [k, wd] = weights.shape() else {
        return Err(Error::invalid(
            "aam_softmax",
            "class weights must be [K, D]",
        ));
    };
    let (n, d, k) = (*n, *d, *k);
    if *wd != d {
        return Err(Error::shape(
            "aam_softmax weights",
            &[k, d],
            weights.shape(),
        ));
    }
    if labels.len() != n {
        return Err(Error::invalid(
            "aam_softmax",
            "one label per embedding required",
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes: k,
        });
    }
    let (eu, en) = normalize_rows("aam_softmax embedding", embeddings)?;
    let (wu, wn) = normalize_rows("aam_softmax class weight", weights)?;

    let (cos_m, sin_m) = (cos(cfg.margin), sin(cfg.margin));
    let threshold = cos(core::f64::consts::PI - cfg.margin);
    let fallback = cfg.margin * sin_m;

    let mut loss = 0.0;
    // d loss / d cosine for every (sample, class).
    let mut g_cos = vec![0.0; n * k];
    let mut logits = vec![0.0; k];
    for i in 0..n {
        let er = &eu[i * d..(i + 1) * d];
        let y = labels[i];
        let mut target_slope = 1.0;
        for j in 0..k {
            let c: f64 = er
                .iter()
                .zip(&wu[j * d..(j + 1) * d])
                .map(|(a, b)| a * b)
                .sum();
            let c = c.clamp(-1.0, 1.0);
            let logit = if j == y {
                if c > threshold {
                    let sin_t = sqrt((1.0 - c * c).max(0.0));
                    target_slope = cos_m + sin_m * c / sin_t.max(1e-12);
                    cos(acos(c) + cfg.margin)
                } else {
                    c - fallback
                }
            } else {
                c
            };
            logits[j] = cfg.scale * logit;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| exp(l - max)).sum();
        let lse = max + ln(sum);
        loss += lse - logits[y];
        for j in 0..k {
            let p = exp(logits[j] - lse);
            let dl = (p - if j == y { 1.0 } else { 0.0 }) / n as f64;
            let slope = if j == y { target_slope } else { 1.0 };
            g_cos[i * k + j] = dl * cfg.scale * slope;
        }
    }

    let mut g_eu = vec![0.0; n * d];
    let mut g_wu = vec![0.0; k * d];
    for i in 0..n {
        for j in 0..k {
            let g = g_cos[i * k + j];
            if g == 0.0 {
                continue;
            }
            for t in 0..d {
                g_eu[i * d + t] += g * wu[j * d + t];
                g_wu[j * d + t] += g * eu[i * d + t];
            }
        }
    }
    Ok(AamOutput {
        loss: loss / n as f64,
        grad_embeddings: Tensor::new(&[n, d], unnormalize_grad(&eu, &en, &g_eu, d))?,
        grad_weights: Tensor::new(&[k, d], unnormalize_grad(&wu, &wn, &g_wu, d))?,
    })
}
