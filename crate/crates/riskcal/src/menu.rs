//! The coverage menu: the attainable (coverage, value, action) frontier of a
//! single forecast.
//!
//! For an action `a` and a utility level `v`, the forecast mass of the tail
//! set `{y : u(a, y) >= v}` is the probability with which playing `a`
//! guarantees utility at least `v`. Collecting one candidate per (action,
//! distinct level) pair and pruning dominated candidates yields a short
//! Pareto frontier, sorted by strictly increasing coverage `s` and strictly
//! decreasing value `v`:
//!
//! - `at_coverage(t)` returns the best guaranteed value among entries with
//!   `s >= t`, the closed-tail analogue of maximizing the (1-t)-quantile of
//!   `u(a, Y)` over actions. The closed tail keeps the boundary atom, so it
//!   never certifies less than the quantile at the same coverage.
//! - `select(beta)` returns the entry maximizing `v + beta * s`, the
//!   one-dimensional dual selector that prices coverage at `beta`. It is
//!   piecewise constant in `beta`, changing only at the pairwise slopes
//!   returned by `breakpoints()`.
//!
//! Ties in `select` break toward the larger coverage, deterministically and
//! identically for every data point, which keeps calibration exchangeable.

use crate::error::{Error, Result};
use crate::model::{mass_of, Forecast, UtilityMatrix};

/// One attainable point of the frontier: playing `action` guarantees
/// utility at least `value` with forecast mass exactly `coverage`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MenuEntry {
    pub coverage: f64,
    pub value: f64,
    pub action: usize,
}

/// The pruned frontier for one forecast. Entries are sorted by strictly
/// increasing coverage with strictly decreasing value; the first entry sits
/// at the table maximum, the last at full coverage.
///
/// Selection is answered from a precomputed upper envelope of the lines
/// `value + beta * coverage` rather than by re-evaluating scores: at a
/// crossing the larger-coverage side wins *by construction*, so the
/// selector is an exactly right-continuous step function of the f64
/// crossing values and every caller (candidate search, population solver,
/// set construction) sees identical regime boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMenu {
    entries: Vec<MenuEntry>,
    /// Envelope winners, increasing coverage; `winners[0]` holds from 0.
    winners: Vec<usize>,
    /// `winners[k+1]` takes over at `crossings[k]` (inclusive).
    crossings: Vec<f64>,
}

impl CoverageMenu {
    /// Enumerates every (action, distinct level) candidate and prunes
    /// weakly dominated ones. Exact-duplicate (coverage, value) pairs keep
    /// the lowest action index.
    pub fn build(matrix: &UtilityMatrix, forecast: &Forecast) -> Result<Self> {
        if forecast.n_labels() != matrix.n_labels() {
            return Err(Error::DimensionMismatch {
                expected: matrix.n_labels(),
                got: forecast.n_labels(),
            });
        }
        let k = matrix.n_labels();
        let mut candidates: Vec<MenuEntry> = Vec::new();
        let mut levels: Vec<f64> = Vec::with_capacity(k);
        for action in 0..matrix.n_actions() {
            let row = matrix.row(action);
            levels.clear();
            levels.extend_from_slice(row);
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            for &value in levels.iter() {
                let coverage = mass_of(forecast, (0..k).filter(|&y| row[y] >= value));
                candidates.push(MenuEntry { coverage, value, action });
            }
        }
        // Sort by coverage desc, value desc, action asc; one sweep keeps an
        // entry only when its value strictly exceeds everything seen at
        // larger-or-equal coverage.
        candidates.sort_by(|a, b| {
            b.coverage
                .total_cmp(&a.coverage)
                .then(b.value.total_cmp(&a.value))
                .then(a.action.cmp(&b.action))
        });
        let mut kept: Vec<MenuEntry> = Vec::new();
        let mut best_value = f64::NEG_INFINITY;
        for c in candidates {
            if c.value > best_value {
                kept.push(c);
                best_value = c.value;
            }
        }
        kept.reverse();
        Ok(Self::from_entries(kept))
    }

    /// Computes the upper envelope of the score lines. Entries arrive with
    /// strictly increasing coverage (slope) and strictly decreasing value
    /// (intercept), so the standard winner-stack sweep applies; a crossing
    /// at or before the previous one means the stacked entry never wins.
    fn from_entries(entries: Vec<MenuEntry>) -> Self {
        let mut winners: Vec<usize> = Vec::with_capacity(entries.len());
        let mut crossings: Vec<f64> = Vec::with_capacity(entries.len().saturating_sub(1));
        for e in 0..entries.len() {
            loop {
                let Some(&w) = winners.last() else {
                    winners.push(e);
                    break;
                };
                let c = (entries[w].value - entries[e].value)
                    / (entries[e].coverage - entries[w].coverage);
                if crossings.last().is_some_and(|&prev| c <= prev) {
                    winners.pop();
                    crossings.pop();
                    continue;
                }
                winners.push(e);
                crossings.push(c);
                break;
            }
        }
        Self { entries, winners, crossings }
    }

    #[inline]
    pub fn entries(&self) -> &[MenuEntry] {
        &self.entries
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Best entry among those with coverage at least `t`. Always exists:
    /// the last entry has full coverage.
    pub fn at_coverage(&self, t: f64) -> Result<MenuEntry> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "coverage target {t} outside [0, 1]"
            )));
        }
        // Entries are value-descending, so the first feasible one wins.
        self.entries
            .iter()
            .find(|e| e.coverage >= t)
            .copied()
            .ok_or_else(|| Error::InvalidForecast(format!("no menu entry reaches coverage {t}")))
    }

    /// Entry maximizing `value + beta * coverage`; at a crossing the larger
    /// coverage wins.
    pub fn select(&self, beta: f64) -> Result<MenuEntry> {
        self.select_index(beta).map(|i| self.entries[i])
    }

    /// Index of the entry `select` would return: an envelope lookup, with
    /// `beta >= crossing` handing the regime to the larger-coverage side.
    pub fn select_index(&self, beta: f64) -> Result<usize> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta {beta} must be finite and >= 0"
            )));
        }
        if self.entries.is_empty() {
            return Err(Error::InvalidForecast("empty menu".into()));
        }
        let regime = self.crossings.partition_point(|&c| c <= beta);
        Ok(self.winners[regime])
    }

    /// All nonnegative pairwise slopes `(v_i - v_j) / (s_j - s_i)` over
    /// entry pairs with `s_j > s_i`, deduplicated and sorted ascending.
    /// `select` is constant between consecutive returned values.
    pub fn breakpoints(&self) -> Vec<f64> {
        let n = self.entries.len();
        let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let lo = &self.entries[i];
                let hi = &self.entries[j];
                let slope = (lo.value - hi.value) / (hi.coverage - lo.coverage);
                if slope.is_finite() && slope >= 0.0 {
                    out.push(slope);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// The level-`alpha` quantile of the discrete distribution placing `masses`
/// on `values`: the smallest support value `z` with `P(Z <= z) >= alpha`.
/// At `alpha = 0` this returns the support minimum.
///
/// Retained as the reference quantile for consistency tests against the
/// closed-tail menu.
pub fn discrete_quantile(values: &[f64], masses: &[f64], alpha: f64) -> Result<f64> {
    if values.len() != masses.len() {
        return Err(Error::InvalidParameter(format!(
            "{} values vs {} masses",
            values.len(),
            masses.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "quantile level {alpha} outside [0, 1]"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite support value".into()));
    }
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::InvalidParameter("negative or non-finite mass".into()));
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "masses sum to {total}, expected 1"
        )));
    }
    let mut support: Vec<(f64, f64)> = values
        .iter()
        .zip(masses.iter())
        .filter(|&(_, &m)| m > 0.0)
        .map(|(&v, &m)| (v, m))
        .collect();
    if support.is_empty() {
        return Err(Error::InvalidParameter("empty support".into()));
    }
    support.sort_by(|a, b| a.0.total_cmp(&b.0));
    if alpha == 0.0 {
        return Ok(support[0].0);
    }
    let mut cdf = 0.0;
    for &(v, m) in &support {
        cdf += m;
        if cdf >= alpha {
            return Ok(v);
        }
    }
    // Rounding can leave the final cdf a hair under alpha = 1.
    Ok(support.last().unwrap().0)
}
