//! Risk-averse calibration: a finite-sample search for the coverage price
//! `beta` with a distribution-free guarantee.
//!
//! For each hypothesized test label `y`, the calibrated multiplier is
//!
//! ```text
//! beta_y = min { beta >= 0 :
//!     #{ i : y_i in C(f_i; beta) } + [ y in C(f_test; beta) ] >= (1 - alpha) (n + 1) }
//! ```
//!
//! where `C(f; beta)` is the dual-selected threshold set of `f`'s coverage
//! menu. The emitted set keeps each label `y` that its own calibrated set
//! contains: `{ y : y in C(f_test; beta_y) }`. Under exchangeability of the
//! calibration rows and the test row, the true label lands in this set with
//! probability at least `1 - alpha`, for any forecaster and any utility
//! table.
//!
//! The per-candidate coverage count is piecewise constant in `beta`, jumping
//! only at the pairwise slopes of the pooled menus, so the continuum argmin
//! is realized exactly as a minimum over a finite candidate list: every
//! pooled breakpoint, each midpoint to the next, zero, and one guard point
//! past the last breakpoint (where every smoothed forecast's set has full
//! coverage, which is what makes the search feasible). All labels share one
//! candidate list and one calibration-count vector; only the test indicator
//! varies per label.

use serde::{Deserialize, Serialize};

use crate::decision::{decide, CertifiedDecision, PredictionSet};
use crate::error::{Error, Result};
use crate::menu::CoverageMenu;
use crate::model::{Dataset, Forecast, UtilityMatrix};
use crate::par;

/// How the candidate multipliers are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMode {
    /// Exact breakpoint union; loses nothing.
    Exact,
    /// Logarithmic grid up to the largest breakpoint; may overshoot upward.
    Grid,
}

impl std::fmt::Display for BetaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BetaMode::Exact => write!(f, "exact"),
            BetaMode::Grid => write!(f, "grid"),
        }
    }
}

/// Calibration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RacConfig {
    /// Miscoverage level, in (0, 1).
    pub alpha: f64,
    pub beta_mode: BetaMode,
    /// Number of grid values when `beta_mode` is `Grid`.
    pub grid_points: usize,
    /// Exact-mode candidate budget; past it the search falls back to a grid.
    pub candidate_cap: usize,
}

impl Default for RacConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta_mode: BetaMode::Exact,
            grid_points: 10_000,
            candidate_cap: 50_000,
        }
    }
}

impl RacConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter("grid_points must be >= 2".into()));
        }
        if self.candidate_cap == 0 {
            return Err(Error::InvalidParameter("candidate_cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// The finite candidate list the argmin ranges over.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub betas: Vec<f64>,
    pub mode: BetaMode,
}

/// Per-label calibrated multipliers plus candidate metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaCalibration {
    /// `betas[y]` is the calibrated multiplier for hypothesized label `y`.
    pub betas: Vec<f64>,
    pub mode: BetaMode,
    pub n_candidates: usize,
}

/// A calibrated prediction for one test forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct RacPrediction {
    pub decision: CertifiedDecision,
    pub calibration: BetaCalibration,
}

struct CalibRow {
    menu: CoverageMenu,
    /// Per menu entry: does this row's true label clear the entry's level?
    member: Vec<bool>,
}

/// Reusable calibration state: menus and pooled breakpoints of the
/// calibration rows. Build once, predict many.
pub struct RacCalibrator<'a> {
    matrix: &'a UtilityMatrix,
    cfg: RacConfig,
    rows: Vec<CalibRow>,
    calib_breakpoints: Vec<f64>,
}

impl<'a> RacCalibrator<'a> {
    pub fn new(matrix: &'a UtilityMatrix, calib: &Dataset, cfg: RacConfig) -> Result<Self> {
        cfg.validate()?;
        if calib.is_empty() {
            return Err(Error::InvalidDataset("empty calibration set".into()));
        }
        if calib.n_labels() != matrix.n_labels() {
            return Err(Error::DimensionMismatch {
                expected: matrix.n_labels(),
                got: calib.n_labels(),
            });
        }
        let samples = calib.samples();
        let rows = par::try_map_range(samples.len(), |i| {
            let s = &samples[i];
            let menu = CoverageMenu::build(matrix, &s.forecast)?;
            let member = menu
                .entries()
                .iter()
                .map(|e| matrix.value(e.action, s.label) >= e.value)
                .collect();
            Ok::<_, Error>(CalibRow { menu, member })
        })?;
        let mut calib_breakpoints = Vec::new();
        for row in &rows {
            calib_breakpoints.extend(row.menu.breakpoints());
        }
        calib_breakpoints.sort_by(f64::total_cmp);
        calib_breakpoints.dedup();
        Ok(Self { matrix, cfg, rows, calib_breakpoints })
    }

    pub fn n_calib(&self) -> usize {
        self.rows.len()
    }

    pub fn config(&self) -> &RacConfig {
        &self.cfg
    }

    /// The shared candidate multipliers for one test forecast: pooled
    /// breakpoints of all calibration menus plus the test menu, with
    /// interval midpoints, zero, and the past-the-end guard.
    pub fn candidates(&self, test: &Forecast) -> Result<CandidateGrid> {
        let menu = CoverageMenu::build(self.matrix, test)?;
        Ok(self.assemble(&menu.breakpoints()))
    }

    fn assemble(&self, extra_breakpoints: &[f64]) -> CandidateGrid {
        let mut pooled = self.calib_breakpoints.clone();
        pooled.extend_from_slice(extra_breakpoints);
        pooled.sort_by(f64::total_cmp);
        pooled.dedup();

        if self.cfg.beta_mode == BetaMode::Grid {
            return log_grid(pooled.last().copied().unwrap_or(0.0), self.cfg.grid_points);
        }
        let mut betas = Vec::with_capacity(2 * pooled.len() + 2);
        betas.push(0.0);
        for (i, &b) in pooled.iter().enumerate() {
            betas.push(b);
            if let Some(&next) = pooled.get(i + 1) {
                betas.push(0.5 * (b + next));
            }
        }
        if let Some(&last) = pooled.last() {
            betas.push(beyond(last));
        }
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        if betas.len() > self.cfg.candidate_cap {
            return log_grid(pooled.last().copied().unwrap_or(0.0), self.cfg.grid_points);
        }
        CandidateGrid { betas, mode: BetaMode::Exact }
    }

    /// Evaluates the calibration coverage counts and the per-label test
    /// memberships at every candidate. The result can be solved at any
    /// `alpha` without re-counting.
    pub fn prepare(&self, test: &Forecast) -> Result<BetaSearch<'_>> {
        if test.n_labels() != self.matrix.n_labels() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.n_labels(),
                got: test.n_labels(),
            });
        }
        let test_menu = CoverageMenu::build(self.matrix, test)?;
        let grid = self.assemble(&test_menu.breakpoints());

        let test_member: Vec<Vec<bool>> = test_menu
            .entries()
            .iter()
            .map(|e| {
                (0..self.matrix.n_labels())
                    .map(|y| self.matrix.value(e.action, y) >= e.value)
                    .collect()
            })
            .collect();

        // Kept sequential: per-candidate work is a microsecond, and batch
        // and Monte Carlo callers already parallelize one level up.
        let counts: Vec<u32> = grid
            .betas
            .iter()
            .map(|&beta| {
                let mut count = 0u32;
                for row in &self.rows {
                    if row.member[row.menu.select_index(beta)?] {
                        count += 1;
                    }
                }
                Ok::<_, Error>(count)
            })
            .collect::<Result<_>>()?;
        let test_entry: Vec<usize> = grid
            .betas
            .iter()
            .map(|&b| test_menu.select_index(b))
            .collect::<Result<_>>()?;

        Ok(BetaSearch {
            matrix: self.matrix,
            n_calib: self.rows.len(),
            default_alpha: self.cfg.alpha,
            grid,
            counts,
            test_entry,
            test_member,
        })
    }

    /// Full calibrated prediction for one test forecast at the configured
    /// miscoverage level.
    pub fn predict(&self, test: &Forecast) -> Result<RacPrediction> {
        self.prepare(test)?.solve(self.cfg.alpha)
    }

    /// Calibrated multiplier for one hypothesized label.
    pub fn label_beta(&self, test: &Forecast, label: usize) -> Result<f64> {
        let search = self.prepare(test)?;
        let (_, beta) = search.label_beta(self.cfg.alpha, label)?;
        Ok(beta)
    }

    /// Independent per-row predictions; deterministic and order-preserving.
    pub fn predict_batch(&self, tests: &[Forecast]) -> Result<Vec<RacPrediction>> {
        par::try_map_range(tests.len(), |i| self.predict(&tests[i]))
    }

    /// Split-style shared multiplier, calibrated on the calibration rows
    /// alone with the test indicator replaced by its upper bound of 1.
    /// Test-independent, so batch callers compute it once.
    pub fn split_beta(&self) -> Result<f64> {
        let grid = self.assemble(&[]);
        let threshold = coverage_threshold(self.cfg.alpha, self.rows.len());
        for &b in &grid.betas {
            let mut count = 0u32;
            for row in &self.rows {
                if row.member[row.menu.select_index(b)?] {
                    count += 1;
                }
            }
            if f64::from(count) + 1.0 >= threshold {
                return Ok(b);
            }
        }
        Err(Error::Infeasible(
            "no candidate multiplier satisfies the coverage constraint".into(),
        ))
    }

    /// Split-style variant: cheaper than the per-label search, still
    /// coverage-safe, but not the default.
    pub fn predict_split(&self, test: &Forecast) -> Result<(CertifiedDecision, f64)> {
        let beta = self.split_beta()?;
        let decision = crate::decision::set_at_beta(self.matrix, test, beta)?;
        Ok((decision, beta))
    }
}

/// Candidate counts for one test forecast, solvable at any miscoverage
/// level. Memberships are evaluated directly at each candidate, so counts
/// are a pure function of the candidate value: exact and grid searches
/// agree wherever their candidates coincide.
pub struct BetaSearch<'a> {
    matrix: &'a UtilityMatrix,
    n_calib: usize,
    default_alpha: f64,
    grid: CandidateGrid,
    /// Per candidate: how many calibration rows' labels their set contains.
    counts: Vec<u32>,
    /// Per candidate: index of the selected test-menu entry.
    test_entry: Vec<usize>,
    /// Per test-menu entry, per label: tail membership.
    test_member: Vec<Vec<bool>>,
}

impl BetaSearch<'_> {
    pub fn grid(&self) -> &CandidateGrid {
        &self.grid
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Smallest candidate whose (n+1)-term coverage count clears the
    /// threshold for hypothesized label `label`. Returns (candidate index,
    /// beta).
    pub fn label_beta(&self, alpha: f64, label: usize) -> Result<(usize, f64)> {
        let threshold = coverage_threshold(alpha, self.n_calib);
        for (c, &beta) in self.grid.betas.iter().enumerate() {
            let test_in = self.test_member[self.test_entry[c]][label];
            if f64::from(self.counts[c]) + f64::from(u8::from(test_in)) >= threshold {
                return Ok((c, beta));
            }
        }
        Err(Error::Infeasible(format!(
            "no candidate multiplier reaches the coverage threshold for label {label}"
        )))
    }

    /// Assembles the calibrated set, action, and certificate at `alpha`.
    pub fn solve(&self, alpha: f64) -> Result<RacPrediction> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
        }
        let k = self.matrix.n_labels();
        let mut betas = Vec::with_capacity(k);
        let mut members = Vec::with_capacity(k);
        for y in 0..k {
            let (c, beta) = self.label_beta(alpha, y)?;
            betas.push(beta);
            members.push(self.test_member[self.test_entry[c]][y]);
        }
        let set = PredictionSet::from_members(k, (0..k).filter(|&y| members[y]));
        let decision = decide(self.matrix, set);
        Ok(RacPrediction {
            decision,
            calibration: BetaCalibration {
                betas,
                mode: self.grid.mode,
                n_candidates: self.grid.betas.len(),
            },
        })
    }

    /// Solve at the calibrator's configured level.
    pub fn solve_default(&self) -> Result<RacPrediction> {
        self.solve(self.default_alpha)
    }
}

/// The count a candidate must reach: `(1 - alpha) * (n + 1)`.
#[inline]
pub(crate) fn coverage_threshold(alpha: f64, n_calib: usize) -> f64 {
    (1.0 - alpha) * ((n_calib + 1) as f64)
}

/// Strictly past the last breakpoint by a margin that dwarfs rounding, so
/// the full-coverage regime is always sampled.
fn beyond(last: f64) -> f64 {
    last * (1.0 + 1e-9) + 1e-12
}

/// `points` values spanning [0, hi]: zero, then a log-spaced ramp ending at
/// `hi`, then the past-the-end guard.
fn log_grid(hi: f64, points: usize) -> CandidateGrid {
    if hi <= 0.0 {
        return CandidateGrid { betas: vec![0.0], mode: BetaMode::Grid };
    }
    let lo = hi * 1e-8;
    let steps = points - 1;
    let mut betas = Vec::with_capacity(points + 1);
    betas.push(0.0);
    for i in 0..steps {
        let frac = if steps == 1 { 1.0 } else { i as f64 / (steps - 1) as f64 };
        betas.push(lo * (hi / lo).powf(frac));
    }
    // powf rounding can leave the ramp top a hair off hi; pin it.
    let len = betas.len();
    betas[len - 1] = hi;
    betas.push(beyond(hi));
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    CandidateGrid { betas, mode: BetaMode::Grid }
}

/// One-shot convenience: calibrate on `calib` and predict `test`.
pub fn rac_predict(
    matrix: &UtilityMatrix,
    calib: &Dataset,
    test: &Forecast,
    cfg: RacConfig,
) -> Result<RacPrediction> {
    RacCalibrator::new(matrix, calib, cfg)?.predict(test)
}

/// One-shot convenience over a batch of test forecasts.
pub fn rac_batch(
    matrix: &UtilityMatrix,
    calib: &Dataset,
    tests: &[Forecast],
    cfg: RacConfig,
) -> Result<Vec<RacPrediction>> {
    RacCalibrator::new(matrix, calib, cfg)?.predict_batch(tests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabeledSample;
    use crate::testutil::{clinical4, identity2};

    fn dataset(rows: Vec<(Vec<f64>, usize)>, k: usize) -> Dataset {
        let samples = rows
            .into_iter()
            .map(|(p, label)| LabeledSample { forecast: Forecast::new(p).unwrap(), label })
            .collect();
        Dataset::new(samples, k).unwrap()
    }

    #[test]
    fn point_mass_rows_calibrate_to_zero() {
        let m = identity2();
        let calib = dataset(vec![(vec![1.0, 0.0], 0)], 2);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.5)).unwrap();
        let test = Forecast::new(vec![1.0, 0.0]).unwrap();
        for y in 0..2 {
            assert_eq!(cal.label_beta(&test, y).unwrap(), 0.0);
        }
        // Only y0 passes its membership test, so the set is the singleton.
        let pred = cal.predict(&test).unwrap();
        assert_eq!(pred.decision.set.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!((pred.decision.action, pred.decision.value), (0, 1.0));
    }

    #[test]
    fn empty_calibration_is_an_error() {
        let m = identity2();
        let calib = Dataset::new(vec![], 2).unwrap();
        assert!(RacCalibrator::new(&m, &calib, RacConfig::default()).is_err());
    }

    #[test]
    fn vacuous_constraint_yields_zero_betas() {
        let m = identity2();
        let calib = dataset(vec![(vec![1.0, 0.0], 0)], 2);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.999)).unwrap();
        let test = Forecast::new(vec![0.0, 1.0]).unwrap();
        let pred = cal.predict(&test).unwrap();
        assert!(pred.calibration.betas.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn tight_alpha_fills_the_set() {
        // n = 1, alpha near 0: the count must reach 2, so each label's
        // multiplier rises until the test set admits it.
        let m = identity2();
        let calib = dataset(vec![(vec![0.7, 0.3], 0)], 2);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.01)).unwrap();
        let test = Forecast::new(vec![0.6, 0.4]).unwrap();
        let search = cal.prepare(&test).unwrap();
        let (_, b0) = search.label_beta(0.01, 0).unwrap();
        let (_, b1) = search.label_beta(0.01, 1).unwrap();
        assert_eq!(b0, 0.0);
        assert!(b1 > 0.0);
        let pred = search.solve(0.01).unwrap();
        assert_eq!(pred.decision.set.len(), 2);
        assert_eq!(pred.decision.value, 0.0);
    }

    #[test]
    fn candidate_grid_examples() {
        let m = identity2();
        // Identical single calibration point and test: breakpoints coincide.
        let calib = dataset(vec![(vec![0.7, 0.3], 0)], 2);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::default()).unwrap();
        let test = Forecast::new(vec![0.7, 0.3]).unwrap();
        let grid = cal.candidates(&test).unwrap();
        assert_eq!(grid.mode, BetaMode::Exact);
        assert!(grid.betas.contains(&0.0));
        assert!(grid.betas.iter().any(|&b| (b - 10.0 / 3.0).abs() < 1e-12));

        // All point masses: single-entry menus, no slopes anywhere.
        let calib = dataset(vec![(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 1)], 2);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::default()).unwrap();
        let grid = cal.candidates(&Forecast::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(grid.betas, vec![0.0]);
    }

    #[test]
    fn candidate_union_keeps_both_menus_breakpoints() {
        // Menus with breakpoints {8} and {2.5} pooled with interior samples.
        let m = identity2();
        let calib = dataset(vec![(vec![0.5, 0.5], 0)], 2); // breakpoint 0/... single? no: (0.5,1),(1,0) -> slope 2
        let cal = RacCalibrator::new(&m, &calib, RacConfig::default()).unwrap();
        let test = Forecast::new(vec![0.8, 0.2]).unwrap(); // slope 1/0.2 = 5
        let grid = cal.candidates(&test).unwrap();
        let has = |x: f64| grid.betas.iter().any(|&b| (b - x).abs() < 1e-9);
        assert!(has(0.0) && has(2.0) && has(5.0));
        // midpoint of the pooled pair
        assert!(has(3.5));
        // guard past the last breakpoint
        assert!(grid.betas.iter().any(|&b| b > 5.0));
    }

    #[test]
    fn unsmoothed_zero_mass_label_reports_infeasible() {
        let m = identity2();
        // The calibration row's true label has zero forecast mass and its
        // menu collapses to a single entry that can never contain it.
        let calib = dataset(vec![(vec![1.0, 0.0], 1)], 2);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.05)).unwrap();
        let err = cal.predict(&Forecast::new(vec![1.0, 0.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn identical_forecasts_reduce_to_one_shared_multiplier() {
        // Every row shares one forecast, so per-label searches differ only
        // in the test indicator and the output set is one dual-threshold
        // set of the test menu.
        let m = clinical4();
        let f = vec![0.4, 0.3, 0.2, 0.1];
        let calib = dataset(vec![(f.clone(), 0), (f.clone(), 1), (f.clone(), 2)], 4);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.3)).unwrap();
        let test = Forecast::new(f).unwrap();
        let pred = cal.predict(&test).unwrap();
        let search = cal.prepare(&test).unwrap();
        let matches_some_candidate = search.grid().betas.iter().any(|&b| {
            let d = crate::decision::set_at_beta(&m, &test, b).unwrap();
            d.set == pred.decision.set
        });
        assert!(matches_some_candidate);
    }

    #[test]
    fn batch_is_rowwise_and_deterministic() {
        let m = identity2();
        let calib = dataset(vec![(vec![0.7, 0.3], 0), (vec![0.2, 0.8], 1)], 2);
        let cal = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.2)).unwrap();

        assert!(cal.predict_batch(&[]).unwrap().is_empty());

        let t = Forecast::new(vec![0.5, 0.5]).unwrap();
        let batch = cal.predict_batch(&[t.clone(), t.clone()]).unwrap();
        assert_eq!(batch[0], batch[1]);

        let rows: Vec<_> = [t.clone(), Forecast::new(vec![0.9, 0.1]).unwrap()]
            .iter()
            .map(|f| cal.predict(f).unwrap())
            .collect();
        let batch = cal
            .predict_batch(&[t, Forecast::new(vec![0.9, 0.1]).unwrap()])
            .unwrap();
        assert_eq!(batch, rows);
    }

    #[test]
    fn permuting_calibration_rows_changes_nothing() {
        let m = clinical4();
        let rows = vec![
            (vec![0.55, 0.2, 0.15, 0.1], 0),
            (vec![0.1, 0.6, 0.2, 0.1], 1),
            (vec![0.2, 0.1, 0.6, 0.1], 2),
            (vec![0.3, 0.3, 0.2, 0.2], 3),
            (vec![0.25, 0.25, 0.25, 0.25], 1),
        ];
        let mut permuted = rows.clone();
        permuted.rotate_left(2);
        permuted.swap(0, 3);

        let cfg = RacConfig::with_alpha(0.25);
        let a = RacCalibrator::new(&m, &dataset(rows, 4), cfg).unwrap();
        let b = RacCalibrator::new(&m, &dataset(permuted, 4), cfg).unwrap();
        let test = Forecast::new(vec![0.3, 0.25, 0.25, 0.2]).unwrap();
        let pa = a.predict(&test).unwrap();
        let pb = b.predict(&test).unwrap();
        assert_eq!(pa.calibration.betas, pb.calibration.betas);
        assert_eq!(pa.decision, pb.decision);
    }

    #[test]
    fn split_variant_is_coverage_safe_and_cheaper() {
        let m = identity2();
        let calib = dataset(
            vec![(vec![0.7, 0.3], 0), (vec![0.4, 0.6], 1), (vec![0.8, 0.2], 0)],
            2,
        );
        let cal = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.3)).unwrap();
        let test = Forecast::new(vec![0.6, 0.4]).unwrap();
        let (decision, beta) = cal.predict_split(&test).unwrap();
        assert!(beta >= 0.0);
        assert!(!decision.set.is_empty());
    }

    #[test]
    fn grid_mode_overshoots_exact_upward() {
        let m = clinical4();
        let calib = dataset(
            vec![
                (vec![0.5, 0.25, 0.15, 0.1], 0),
                (vec![0.1, 0.55, 0.25, 0.1], 1),
                (vec![0.15, 0.2, 0.5, 0.15], 2),
            ],
            4,
        );
        let test = Forecast::new(vec![0.3, 0.3, 0.25, 0.15]).unwrap();
        let exact = RacCalibrator::new(&m, &calib, RacConfig::with_alpha(0.2))
            .unwrap()
            .predict(&test)
            .unwrap();
        let grid_cfg = RacConfig {
            alpha: 0.2,
            beta_mode: BetaMode::Grid,
            ..RacConfig::default()
        };
        let grid = RacCalibrator::new(&m, &calib, grid_cfg)
            .unwrap()
            .predict(&test)
            .unwrap();
        for (g, e) in grid.calibration.betas.iter().zip(&exact.calibration.betas) {
            assert!(g >= e, "grid beta {g} fell below exact beta {e}");
        }
    }
}
