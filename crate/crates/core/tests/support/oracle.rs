//! Brute-force reference implementations shared by the oracle tests and
//! the acceptance suite.

#![allow(dead_code)]

pub const WINDOW: usize = 8;
pub const HOP: usize = 4;

/// Enumerates every window start explicitly and takes, per frame, the max
/// over the pooled values of the windows that contain it.
pub fn plp_oracle(x: &[f64], channels: usize, t: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; channels * t];
    for c in 0..channels {
        let row = &x[c * t..(c + 1) * t];
        let mut start = 0;
        while start < t {
            let end = (start + WINDOW).min(t);
            let pooled = row[start..end]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            for f in start..end {
                out[c * t + f] = out[c * t + f].max(pooled);
            }
            start += HOP;
        }
    }
    out
}

/// Miss and false-alarm rates by direct counting at one threshold.
fn rates(targets: &[f64], nontargets: &[f64], theta: f64) -> (f64, f64) {
    let miss = targets.iter().filter(|&&s| s < theta).count() as f64 / targets.len() as f64;
    let fa = nontargets.iter().filter(|&&s| s >= theta).count() as f64 / nontargets.len() as f64;
    (miss, fa)
}

fn candidate_thresholds(targets: &[f64], nontargets: &[f64], with_neg_inf: bool) -> Vec<f64> {
    let mut th: Vec<f64> = targets.iter().chain(nontargets).copied().collect();
    th.sort_by(f64::total_cmp);
    th.dedup();
    th.push(f64::INFINITY);
    if with_neg_inf {
        th.insert(0, f64::NEG_INFINITY);
    }
    th
}

/// Walks the operating points in threshold order and stops at the first
/// with `miss >= fa`, joining it linearly to its predecessor when the rates
/// are not exactly equal there.
pub fn eer_oracle(targets: &[f64], nontargets: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = candidate_thresholds(targets, nontargets, false)
        .into_iter()
        .map(|th| rates(targets, nontargets, th))
        .collect();
    let k = pts.iter().position(|(m, f)| m >= f).unwrap();
    let (m1, f1) = pts[k];
    if m1 == f1 {
        return m1;
    }
    let (m0, f0) = pts[k - 1];
    // Solve (1 - a)(m0 - f0) + a(m1 - f1) = 0 for the chord parameter a.
    let a = (f0 - m0) / ((m1 - f1) - (m0 - f0));
    m0 + a * (m1 - m0)
}

pub fn min_dcf_oracle(targets: &[f64], nontargets: &[f64], p: f64) -> f64 {
    candidate_thresholds(targets, nontargets, true)
        .into_iter()
        .map(|th| {
            let (miss, fa) = rates(targets, nontargets, th);
            (miss * p + fa * (1.0 - p)) / p.min(1.0 - p)
        })
        .fold(f64::INFINITY, f64::min)
}
