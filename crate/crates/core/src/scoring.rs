//! Verification trials, cosine scoring and detection metrics.
//!
//! Decisions accept a trial iff `score >= threshold`; ties count as accepts.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::head::SpeakerEmbedding;
use crate::math::sqrt;

/// Cosine similarity of two equal-length vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine", &[a.len()], &[b.len()]));
    }
    let na = sqrt(a.iter().map(|v| v * v).sum());
    let nb = sqrt(b.iter().map(|v| v * v).sum());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_score(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    cosine(a.values(), b.values())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub target: bool,
    pub enroll: String,
    pub test: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Distinct utterance paths in order of first appearance.
    pub fn utterances(&self) -> Vec<&str> {
        let mut seen = alloc::collections::BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.trials {
            for p in [t.enroll.as_str(), t.test.as_str()] {
                if seen.insert(p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

fn parse_label(s: &str, line: usize) -> Result<bool> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Parse {
            line,
            msg: format!("label must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Parses `<0|1> <enroll> <test>` lines (1 = same speaker). Blank lines are
/// skipped; line numbers in errors are 1-based.
pub fn parse_trials(text: &str) -> Result<TrialList> {
    let mut trials = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields[..] {
            [] => continue,
            [label, enroll, test] => trials.push(Trial {
                target: parse_label(label, line)?,
                enroll: enroll.to_string(),
                test: test.to_string(),
            }),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 3 fields, got {}", fields.len()),
                })
            }
        }
    }
    Ok(TrialList { trials })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score: f64,
}

/// One `<label> <enroll> <test> <score>` line, score to six decimals.
pub fn format_score_line(t: &ScoredTrial) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} {} {} {:.6}",
        u8::from(t.trial.target),
        t.trial.enroll,
        t.trial.test,
        t.score
    );
    s
}

pub fn format_score_dump(scores: &[ScoredTrial]) -> String {
    let mut out = String::new();
    for t in scores {
        out.push_str(&format_score_line(t));
        out.push('\n');
    }
    out
}

pub fn parse_score_dump(text: &str) -> Result<Vec<ScoredTrial>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields[..] {
            [] => continue,
            [label, enroll, test, score] => {
                let score: f64 = score.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad score {score:?}"),
                })?;
                if !score.is_finite() {
                    return Err(Error::Parse {
                        line,
                        msg: "score is not finite".into(),
                    });
                }
                out.push(ScoredTrial {
                    trial: Trial {
                        target: parse_label(label, line)?,
                        enroll: enroll.to_string(),
                        test: test.to_string(),
                    },
                    score,
                });
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                })
            }
        }
    }
    Ok(out)
}

/// Operating points `(threshold, p_miss, p_fa)` at every distinct score and
/// at `+inf`, ascending in threshold.
fn operating_points(targets: &[f64], nontargets: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if targets.is_empty() {
        return Err(Error::EmptyScores("target"));
    }
    if nontargets.is_empty() {
        return Err(Error::EmptyScores("nontarget"));
    }
    if targets.iter().chain(nontargets).any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores", "non-finite score"));
    }
    let mut all: Vec<(f64, bool)> = targets
        .iter()
        .map(|&s| (s, true))
        .chain(nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (targets.len() as f64, nontargets.len() as f64);
    let mut points = Vec::new();
    // Scores strictly below the current threshold are rejected.
    let (mut tgt_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let theta = all[i].0;
        points.push((theta, tgt_below as f64 / nt, 1.0 - non_below as f64 / nn));
        while i < all.len() && all[i].0 == theta {
            if all[i].1 {
                tgt_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push((f64::INFINITY, 1.0, 0.0));
    Ok(points)
}

/// Equal error rate and the threshold at which it occurs.
///
/// The miss and false-alarm rates are evaluated at every distinct score and
/// at `+inf`; where their difference changes sign the two bracketing
/// operating points are joined linearly.
pub fn compute_eer(targets: &[f64], nontargets: &[f64]) -> Result<(f64, f64)> {
    let points = operating_points(targets, nontargets)?;
    let mut prev = points[0];
    for &p in &points {
        let d = p.1 - p.2;
        if d == 0.0 {
            return Ok((p.1, p.0));
        }
        if d > 0.0 {
            let dp = prev.1 - prev.2;
            let alpha = dp / (dp - d);
            let eer = prev.1 + alpha * (p.1 - prev.1);
            let threshold = if p.0.is_finite() {
                prev.0 + alpha * (p.0 - prev.0)
            } else {
                prev.0
            };
            return Ok((eer, threshold));
        }
        prev = p;
    }
    unreachable!("the +inf operating point always has p_miss - p_fa = 1")
}

/// Detection cost weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

/// Minimum normalised detection cost over all thresholds, `±inf` included.
pub fn compute_min_dcf(targets: &[f64], nontargets: &[f64], params: DcfParams) -> Result<f64> {
    let DcfParams {
        p_target,
        c_miss,
        c_fa,
    } = params;
    if !(p_target > 0.0 && p_target < 1.0) || c_miss.is_nan() || c_miss <= 0.0 || c_fa.is_nan() || c_fa <= 0.0 {
        return Err(Error::invalid(
            "min_dcf",
            "p_target must lie in (0, 1) and costs must be positive",
        ));
    }
    let points = operating_points(targets, nontargets)?;
    let norm = (c_miss * p_target).min(c_fa * (1.0 - p_target));
    // The lowest score's operating point is the accept-all (-inf) one.
    let best = points
        .iter()
        .map(|&(_, miss, fa)| c_miss * miss * p_target + c_fa * fa * (1.0 - p_target))
        .fold(f64::INFINITY, f64::min);
    Ok(best / norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub eer: f64,
    pub min_dcf: f64,
    pub threshold_at_eer: f64,
    pub num_target: usize,
    pub num_nontarget: usize,
}

impl ScoreReport {
    pub fn from_scores(targets: &[f64], nontargets: &[f64]) -> Result<Self> {
        let (eer, threshold_at_eer) = compute_eer(targets, nontargets)?;
        Ok(Self {
            eer,
            min_dcf: compute_min_dcf(targets, nontargets, DcfParams::default())?,
            threshold_at_eer,
            num_target: targets.len(),
            num_nontarget: nontargets.len(),
        })
    }

    pub fn from_trials(scores: &[ScoredTrial]) -> Result<Self> {
        let (tgt, non): (Vec<&ScoredTrial>, Vec<&ScoredTrial>) =
            scores.iter().partition(|s| s.trial.target);
        let tgt: Vec<f64> = tgt.iter().map(|s| s.score).collect();
        let non: Vec<f64> = non.iter().map(|s| s.score).collect();
        Self::from_scores(&tgt, &non)
    }
}
