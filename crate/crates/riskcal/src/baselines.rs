//! Comparator policies: split conformal prediction feeding the max-min
//! rule, and the risk-neutral best-response decision.
//!
//! Two nonconformity scores are provided. Score-1 is one minus the forecast
//! mass of the candidate label; score-2 is the total mass of labels forecast
//! strictly above it (ties contribute nothing), so its sets are always
//! top-probability prefixes modulo ties.

use serde::{Deserialize, Serialize};

use crate::decision::PredictionSet;
use crate::error::{Error, Result};
use crate::model::{Dataset, Forecast, UtilityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Score1,
    Score2,
}

/// Nonconformity of label `y` under `f`: `1 - f(y)`.
pub fn score1(forecast: &Forecast, label: usize) -> f64 {
    1.0 - forecast.prob(label)
}

/// Nonconformity of label `y` under `f`: mass of labels strictly more
/// probable than `y`.
pub fn score2(forecast: &Forecast, label: usize) -> f64 {
    let p = forecast.prob(label);
    forecast.probs().iter().filter(|&&q| q > p).sum()
}

pub fn score(kind: ScoreKind, forecast: &Forecast, label: usize) -> f64 {
    match kind {
        ScoreKind::Score1 => score1(forecast, label),
        ScoreKind::Score2 => score2(forecast, label),
    }
}

/// A calibrated split-conformal threshold: the `ceil((n+1)(1-alpha))`-th
/// smallest calibration score, or infinity when that rank exceeds `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalThreshold {
    pub q_hat: f64,
    pub kind: ScoreKind,
    pub alpha: f64,
    pub n: usize,
}

pub fn conformal_calibrate(
    calib: &Dataset,
    kind: ScoreKind,
    alpha: f64,
) -> Result<ConformalThreshold> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if calib.is_empty() {
        return Err(Error::InvalidDataset("empty calibration set".into()));
    }
    let n = calib.len();
    let rank = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
    let q_hat = if rank > n {
        f64::INFINITY
    } else {
        let mut scores: Vec<f64> = calib
            .samples()
            .iter()
            .map(|s| score(kind, &s.forecast, s.label))
            .collect();
        scores.sort_by(f64::total_cmp);
        scores[rank.max(1) - 1]
    };
    Ok(ConformalThreshold { q_hat, kind, alpha, n })
}

/// Labels whose score clears the threshold. May be empty; the max-min
/// empty-set convention handles that downstream.
pub fn conformal_set(forecast: &Forecast, threshold: &ConformalThreshold) -> PredictionSet {
    PredictionSet::from_members(
        forecast.n_labels(),
        (0..forecast.n_labels())
            .filter(|&y| score(threshold.kind, forecast, y) <= threshold.q_hat),
    )
}

/// The risk-neutral policy: the action maximizing forecast-expected utility,
/// ties toward the lowest index. Invariant under positive affine rescaling
/// of the table.
pub fn best_response(matrix: &UtilityMatrix, forecast: &Forecast) -> Result<usize> {
    if forecast.n_labels() != matrix.n_labels() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_labels(),
            got: forecast.n_labels(),
        });
    }
    let mut best = 0;
    let mut best_eu = f64::NEG_INFINITY;
    for a in 0..matrix.n_actions() {
        let eu: f64 = matrix
            .row(a)
            .iter()
            .zip(forecast.probs())
            .map(|(&u, &p)| p * u)
            .sum();
        if eu > best_eu {
            best_eu = eu;
            best = a;
        }
    }
    Ok(best)
}
