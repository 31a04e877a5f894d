//! Domain types shared by every stage of the pipeline: utility matrices,
//! forecasts, and labeled datasets.
//!
//! All types are immutable values after construction and safe to share
//! across worker threads.

use crate::error::{Error, Result};

/// Tolerance for a raw probability vector handed to the smoother.
const RAW_SUM_TOL: f64 = 1e-6;
/// Tolerance for an already-normalized probability vector.
const UNIT_SUM_TOL: f64 = 1e-9;

/// A finite action x label utility table `u(a, y)`.
///
/// The working table is nonnegative: tables containing negative entries are
/// accepted and shifted up by `-(min entry)` at construction. The values as
/// given are retained so that serialized output and reported utilities stay
/// on the caller's original scale (max-min argmax structure is invariant
/// under a common shift).
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    action_names: Vec<String>,
    label_names: Vec<String>,
    /// Working entries, `values[action][label]`, all >= 0.
    values: Vec<Vec<f64>>,
    /// Entries exactly as given at construction.
    original: Vec<Vec<f64>>,
    /// Total upward shift applied: `values = original + shift`.
    shift: f64,
    u_max: f64,
}

impl UtilityMatrix {
    /// Validates and builds a utility matrix, auto-shifting negative tables.
    pub fn new(
        action_names: Vec<String>,
        label_names: Vec<String>,
        table: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if action_names.is_empty() {
            return Err(Error::InvalidUtility("no actions declared".into()));
        }
        if label_names.is_empty() {
            return Err(Error::InvalidUtility("no labels declared".into()));
        }
        if table.len() != action_names.len() {
            return Err(Error::InvalidUtility(format!(
                "{} utility rows for {} actions",
                table.len(),
                action_names.len()
            )));
        }
        let mut min = f64::INFINITY;
        for (a, row) in table.iter().enumerate() {
            if row.len() != label_names.len() {
                return Err(Error::InvalidUtility(format!(
                    "row {a} has {} entries for {} labels",
                    row.len(),
                    label_names.len()
                )));
            }
            for (y, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidUtility(format!(
                        "non-finite entry {v} at action {a}, label {y}"
                    )));
                }
                min = min.min(v);
            }
        }
        let shift = if min < 0.0 { -min } else { 0.0 };
        let values: Vec<Vec<f64>> = table
            .iter()
            .map(|row| row.iter().map(|v| v + shift).collect())
            .collect();
        let u_max = values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            action_names,
            label_names,
            values,
            original: table,
            shift,
            u_max,
        })
    }

    /// Returns a copy with every working entry incremented by `c`.
    ///
    /// The accumulated shift is recorded so reports can still recover the
    /// original scale. Fails if the shifted table has a negative entry.
    pub fn shift_by(&self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite shift {c}")));
        }
        let values: Vec<Vec<f64>> = self
            .values
            .iter()
            .map(|row| row.iter().map(|v| v + c).collect())
            .collect();
        let min = values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            return Err(Error::InvalidUtility(format!(
                "table still negative after shift by {c} (min entry {min})"
            )));
        }
        let u_max = values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            action_names: self.action_names.clone(),
            label_names: self.label_names.clone(),
            values,
            original: self.original.clone(),
            shift: self.shift + c,
            u_max,
        })
    }

    /// Working (nonnegative) utility of playing `action` when `label` is true.
    #[inline]
    pub fn value(&self, action: usize, label: usize) -> f64 {
        self.values[action][label]
    }

    /// The entry exactly as given at construction, before any shift.
    #[inline]
    pub fn original_value(&self, action: usize, label: usize) -> f64 {
        self.original[action][label]
    }

    /// One working row, indexed by label.
    #[inline]
    pub fn row(&self, action: usize) -> &[f64] {
        &self.values[action]
    }

    /// Maximum working entry.
    #[inline]
    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    /// Maximum entry on the original scale.
    pub fn original_u_max(&self) -> f64 {
        self.original
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Total shift applied on top of the original entries.
    #[inline]
    pub fn shift(&self) -> f64 {
        self.shift
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    #[inline]
    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn action_name(&self, action: usize) -> &str {
        &self.action_names[action]
    }

    pub fn label_name(&self, label: usize) -> &str {
        &self.label_names[label]
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.label_names.iter().position(|n| n == name)
    }

    /// Original-scale rows, for serialization.
    pub fn original_table(&self) -> &[Vec<f64>] {
        &self.original
    }
}

/// A probability vector over labels, as produced by a forecaster for one
/// instance.
///
/// Entries sum to 1.0 exactly (bitwise, in index order); the constructor
/// repairs the few-ulp residue left by normalization so that full-support
/// tail masses reach 1.0 and coverage comparisons at t = 1 behave.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    p: Vec<f64>,
    smoothed: bool,
}

impl Forecast {
    /// Wraps an already-normalized probability vector.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        Self::checked(p, UNIT_SUM_TOL, false)
    }

    /// Mixes a raw nonnegative vector with the uniform distribution:
    /// `(1 - eps) * normalize(p) + eps * uniform`.
    ///
    /// With `eps > 0` every entry ends up at least `eps / K`, so downstream
    /// calibration always has a feasible full-support regime.
    pub fn smoothed(p: &[f64], eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidParameter(format!(
                "smoothing epsilon {eps} outside [0, 1)"
            )));
        }
        if p.is_empty() {
            return Err(Error::InvalidForecast("empty probability vector".into()));
        }
        let mut sum = 0.0;
        for &v in p {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidForecast(format!("negative or non-finite entry {v}")));
            }
            sum += v;
        }
        if sum <= 0.0 {
            return Err(Error::InvalidForecast("zero-sum probability vector".into()));
        }
        if (sum - 1.0).abs() > RAW_SUM_TOL {
            return Err(Error::InvalidForecast(format!(
                "entries sum to {sum}, expected 1 within {RAW_SUM_TOL}"
            )));
        }
        let k = p.len() as f64;
        let floor = eps / k;
        let mixed: Vec<f64> = p.iter().map(|&v| (1.0 - eps) * (v / sum) + floor).collect();
        Self::checked(mixed, UNIT_SUM_TOL, eps > 0.0)
    }

    fn checked(mut p: Vec<f64>, tol: f64, smoothed: bool) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidForecast("empty probability vector".into()));
        }
        let mut sum = 0.0;
        for &v in &p {
            if !v.is_finite() || !(0.0..=1.0 + tol).contains(&v) {
                return Err(Error::InvalidForecast(format!("entry {v} outside [0, 1]")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidForecast(format!(
                "entries sum to {sum}, expected 1 within {tol}"
            )));
        }
        fix_unit_sum(&mut p)?;
        Ok(Self { p, smoothed })
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn prob(&self, label: usize) -> f64 {
        self.p[label]
    }

    #[inline]
    pub fn n_labels(&self) -> usize {
        self.p.len()
    }

    /// Whether uniform mixing was applied at construction.
    #[inline]
    pub fn is_smoothed(&self) -> bool {
        self.smoothed
    }
}

/// Sum of the masses at `labels`, clamped to 1 to absorb rounding.
///
/// Every coverage figure in the crate goes through this one accumulator
/// (ascending label order) so that menu construction, oracles, and tests
/// agree bitwise.
pub fn mass_of<I: IntoIterator<Item = usize>>(forecast: &Forecast, labels: I) -> f64 {
    let mut s = 0.0;
    for y in labels {
        s += forecast.prob(y);
    }
    s.min(1.0)
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty")
}

/// Nudges the vector so its left-to-right f64 sum equals 1.0 exactly.
///
/// A coarse additive correction on the largest entry can oscillate one ulp
/// around 1 forever (intermediate roundings let the running sum skip the
/// target), so the closer is solved on the *last nonzero* entry instead:
/// trailing zeros add exactly, the final rounding is then the only one in
/// play, and its acceptance window around 1 is wider than one ulp of any
/// entry below 1, so at most a couple of single-ulp nudges land it. Total
/// distortion stays below ~1e-12 per entry and zero entries stay zero.
fn fix_unit_sum(p: &mut [f64]) -> Result<()> {
    if p.len() == 1 {
        p[0] = 1.0;
        return Ok(());
    }
    let big = argmax(p);
    for _ in 0..4 {
        let sum: f64 = p.iter().sum();
        if sum == 1.0 {
            return Ok(());
        }
        let cand = p[big] + (1.0 - sum);
        if cand == p[big] || cand < 0.0 {
            break;
        }
        p[big] = cand;
    }
    let slack = p
        .iter()
        .rposition(|&v| v != 0.0)
        .ok_or_else(|| Error::InvalidForecast("zero-sum probability vector".into()))?;
    for _ in 0..32 {
        let prefix: f64 = p[..slack].iter().sum();
        if prefix >= 1.0 && slack > 0 {
            // Prefix alone overshoots; shave its largest entry one ulp.
            let k = argmax(&p[..slack]);
            p[k] = p[k].next_down();
            if p[k] < 0.0 {
                break;
            }
            continue;
        }
        // Exact when prefix is in [0.5, 1]; otherwise off by at most half
        // an ulp of 1, which the nudges below absorb.
        let mut x = 1.0 - prefix;
        let mut landed = false;
        for _ in 0..8 {
            p[slack] = x;
            let sum: f64 = p.iter().sum();
            if sum == 1.0 {
                return Ok(());
            }
            x = if sum > 1.0 { x.next_down() } else { x.next_up() };
            if x <= 0.0 {
                break;
            }
        }
        if x > 0.0 {
            landed = true;
        }
        if landed {
            break;
        }
        if slack == 0 {
            break;
        }
        let k = argmax(&p[..slack]);
        p[k] = p[k].next_down();
        if p[k] < 0.0 {
            break;
        }
    }
    let sum: f64 = p.iter().sum();
    if sum == 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidForecast(format!(
            "could not normalize to an exact unit sum (residual {:e})",
            sum - 1.0
        )))
    }
}

/// A forecast paired with the realized label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub forecast: Forecast,
    pub label: usize,
}

/// An ordered collection of labeled samples over a common label space.
/// Ordering is irrelevant for every guarantee; it only fixes output order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    n_labels: usize,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>, n_labels: usize) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.forecast.n_labels() != n_labels {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} has {} labels, expected {n_labels}",
                    s.forecast.n_labels()
                )));
            }
            if s.label >= n_labels {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} label index {} out of range ({n_labels} labels)",
                    s.label
                )));
            }
        }
        Ok(Self { samples, n_labels })
    }

    #[inline]
    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn forecasts(&self) -> Vec<Forecast> {
        self.samples.iter().map(|s| s.forecast.clone()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn single_entry_table() {
        let m = UtilityMatrix::new(names("a", 1), names("y", 1), vec![vec![3.5]]).unwrap();
        assert_eq!(m.u_max(), 3.5);
        assert_eq!(m.shift(), 0.0);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(UtilityMatrix::new(vec![], names("y", 1), vec![]).is_err());
        assert!(UtilityMatrix::new(names("a", 1), vec![], vec![vec![]]).is_err());
        assert!(
            UtilityMatrix::new(names("a", 2), names("y", 2), vec![vec![1.0, 2.0], vec![1.0]])
                .is_err()
        );
        assert!(UtilityMatrix::new(names("a", 1), names("y", 1), vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn negative_table_is_shifted() {
        // Recommendation-style table: one abstain row, one graded row.
        let m = UtilityMatrix::new(
            names("a", 2),
            names("y", 5),
            vec![
                vec![0.0, 0.0, 0.0, 0.0, 0.0],
                vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            ],
        )
        .unwrap();
        assert_eq!(m.shift(), 2.0);
        assert_eq!(m.u_max(), 4.0);
        assert_eq!(m.value(1, 0), 0.0);
        assert_eq!(m.original_value(1, 4), 2.0);
        assert_eq!(m.original_u_max(), 2.0);
    }

    #[test]
    fn shift_by_examples() {
        let m = UtilityMatrix::new(names("a", 1), names("y", 1), vec![vec![3.0]]).unwrap();
        let shifted = m.shift_by(1.0).unwrap();
        assert_eq!(shifted.value(0, 0), 4.0);
        assert_eq!(shifted.shift(), 1.0);
        assert_eq!(shifted.original_value(0, 0), 3.0);

        let same = m.shift_by(0.0).unwrap();
        assert_eq!(same.value(0, 0), m.value(0, 0));
        assert_eq!(same.u_max(), m.u_max());

        assert!(m.shift_by(-4.0).is_err());
    }

    #[test]
    fn smoothing_identity_cases() {
        let f = Forecast::smoothed(&[1.0, 0.0], 0.0).unwrap();
        assert_eq!(f.probs(), &[1.0, 0.0]);
        assert!(!f.is_smoothed());

        let f = Forecast::smoothed(&[1.0, 0.0], 0.1).unwrap();
        assert!((f.prob(0) - 0.95).abs() < 1e-15);
        assert!((f.prob(1) - 0.05).abs() < 1e-15);
        assert!(f.is_smoothed());

        // Uniform is a fixed point of mixing with uniform.
        let f = Forecast::smoothed(&[0.5, 0.5], 0.3).unwrap();
        assert_eq!(f.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn smoothing_rejects_bad_input() {
        assert!(Forecast::smoothed(&[0.5, -0.5], 0.1).is_err());
        assert!(Forecast::smoothed(&[0.0, 0.0], 0.1).is_err());
        assert!(Forecast::smoothed(&[0.7, 0.7], 0.1).is_err());
        assert!(Forecast::smoothed(&[0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn forecast_sums_exactly_one() {
        let thirds = Forecast::smoothed(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1e-6).unwrap();
        let sum: f64 = thirds.probs().iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn dataset_validates_dimensions() {
        let f = Forecast::new(vec![0.5, 0.5]).unwrap();
        let ok = Dataset::new(vec![LabeledSample { forecast: f.clone(), label: 1 }], 2);
        assert!(ok.is_ok());
        let bad_label = Dataset::new(vec![LabeledSample { forecast: f.clone(), label: 2 }], 2);
        assert!(bad_label.is_err());
        let bad_dim = Dataset::new(vec![LabeledSample { forecast: f, label: 0 }], 3);
        assert!(bad_dim.is_err());
    }

    #[test]
    fn mass_is_clamped_and_ordered() {
        let f = Forecast::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(mass_of(&f, [0, 1, 2]), 1.0);
        assert_eq!(mass_of(&f, [2]), 0.5);
        assert_eq!(mass_of(&f, []), 0.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Smoothing gives full support: every entry clears the eps/K
            /// floor (up to the one-entry unit-sum closure, below 1e-12).
            #[test]
            fn smoothing_floors_every_entry(
                raw in prop::collection::vec(0.0f64..1.0, 1..7),
                eps in 1e-9f64..0.5,
            ) {
                let sum: f64 = raw.iter().sum();
                prop_assume!(sum > 1e-6);
                let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
                let f = Forecast::smoothed(&p, eps).unwrap();
                let floor = eps / p.len() as f64;
                for &v in f.probs() {
                    prop_assert!(v > 0.0);
                    prop_assert!(v >= floor - 1e-12, "entry {v} under floor {floor}");
                }
                let total: f64 = f.probs().iter().sum();
                prop_assert_eq!(total, 1.0);
            }
        }
    }
}
