//! Prediction sets and the max-min decision rule.
//!
//! A prediction set is a subset of labels claimed to contain the truth. The
//! max-min rule plays the action whose worst case over the set is best, and
//! that worst case is the utility certificate: whenever the true label lands
//! in the set, the realized utility is at least the certificate.
//!
//! Empty sets are legal *inputs* here (a conformal threshold below every
//! score can produce one); by convention they certify the table maximum via
//! the action that attains it. The constructors in this module never emit an
//! empty set themselves.

use crate::error::Result;
use crate::menu::CoverageMenu;
use crate::model::{mass_of, Forecast, UtilityMatrix};

/// A bit-set over label indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    members: Vec<bool>,
}

impl PredictionSet {
    pub fn empty(n_labels: usize) -> Self {
        Self { members: vec![false; n_labels] }
    }

    pub fn full(n_labels: usize) -> Self {
        Self { members: vec![true; n_labels] }
    }

    pub fn from_members(n_labels: usize, members: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(n_labels);
        for y in members {
            set.members[y] = true;
        }
        set
    }

    /// Labels whose utility under `action` clears `level`: the tail set
    /// behind every constructor in this module. Ranges over *all* labels,
    /// including zero-forecast-mass ones.
    pub fn utility_tail(matrix: &UtilityMatrix, action: usize, level: f64) -> Self {
        Self {
            members: (0..matrix.n_labels())
                .map(|y| matrix.value(action, y) >= level)
                .collect(),
        }
    }

    #[inline]
    pub fn contains(&self, label: usize) -> bool {
        self.members[label]
    }

    #[inline]
    pub fn n_labels(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    /// Member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(y, &m)| m.then_some(y))
    }

    /// Forecast mass of the set.
    pub fn mass(&self, forecast: &Forecast) -> f64 {
        mass_of(forecast, self.iter())
    }
}

/// A prediction set together with the max-min action over it and the
/// certified worst-case utility (working scale).
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedDecision {
    pub set: PredictionSet,
    pub action: usize,
    pub value: f64,
}

impl CertifiedDecision {
    fn over(matrix: &UtilityMatrix, set: PredictionSet) -> Self {
        let (action, value) = maxmin(matrix, &set);
        Self { set, action, value }
    }

    /// Certificate on the original (unshifted) utility scale, read straight
    /// off the original table so no arithmetic noise creeps in.
    pub fn original_value(&self, matrix: &UtilityMatrix) -> f64 {
        if self.set.is_empty() {
            return matrix.original_u_max();
        }
        self.set
            .iter()
            .map(|y| matrix.original_value(self.action, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Realized utility of the chosen action on the original scale.
    pub fn original_realized(&self, matrix: &UtilityMatrix, truth: usize) -> f64 {
        matrix.original_value(self.action, truth)
    }
}

/// The max-min rule: the action maximizing the worst-case utility over `set`,
/// with ties resolved toward the lowest action index.
///
/// For an empty set, returns the action attaining the table maximum and
/// certifies `u_max`.
pub fn maxmin(matrix: &UtilityMatrix, set: &PredictionSet) -> (usize, f64) {
    let mut best_action = 0;
    let mut best_value = f64::NEG_INFINITY;
    if set.is_empty() {
        for a in 0..matrix.n_actions() {
            let row_max = matrix.row(a).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if row_max > best_value {
                best_value = row_max;
                best_action = a;
            }
        }
    } else {
        for a in 0..matrix.n_actions() {
            let worst = set
                .iter()
                .map(|y| matrix.value(a, y))
                .fold(f64::INFINITY, f64::min);
            if worst > best_value {
                best_value = worst;
                best_action = a;
            }
        }
    }
    (best_action, best_value)
}

/// The best certified decision whose set holds at least `t` forecast mass:
/// take the frontier entry at coverage `t` and threshold its action's row.
pub fn set_at_coverage(
    matrix: &UtilityMatrix,
    forecast: &Forecast,
    t: f64,
) -> Result<CertifiedDecision> {
    let menu = CoverageMenu::build(matrix, forecast)?;
    let entry = menu.at_coverage(t)?;
    let set = PredictionSet::utility_tail(matrix, entry.action, entry.value);
    Ok(CertifiedDecision::over(matrix, set))
}

/// The certified decision induced by pricing coverage at `beta`: threshold
/// the row of the dual-selected frontier entry. The set is never empty (the
/// entry's level is attained by some label).
pub fn set_at_beta(
    matrix: &UtilityMatrix,
    forecast: &Forecast,
    beta: f64,
) -> Result<CertifiedDecision> {
    let menu = CoverageMenu::build(matrix, forecast)?;
    let entry = menu.select(beta)?;
    let set = PredictionSet::utility_tail(matrix, entry.action, entry.value);
    Ok(CertifiedDecision::over(matrix, set))
}

/// Certified decision for an externally supplied set (conformal baselines,
/// ingested sets): just apply the max-min rule.
pub fn decide(matrix: &UtilityMatrix, set: PredictionSet) -> CertifiedDecision {
    CertifiedDecision::over(matrix, set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{arb_instance, clinical4, identity2};
    use proptest::prelude::*;

    #[test]
    fn maxmin_clinical_pairs() {
        let m = clinical4();
        // {Normal, COVID-19}: per-action minima are (0, 2, 2, 4).
        let set = PredictionSet::from_members(4, [0, 2]);
        assert_eq!(maxmin(&m, &set), (3, 4.0));
        // {COVID-19}: the column maximum, quarantine at 10.
        let set = PredictionSet::from_members(4, [2]);
        assert_eq!(maxmin(&m, &set), (2, 10.0));
    }

    #[test]
    fn maxmin_empty_certifies_table_max() {
        let m = clinical4();
        let (_, v) = maxmin(&m, &PredictionSet::empty(4));
        assert_eq!(v, m.u_max());
        let m = identity2();
        let (a, v) = maxmin(&m, &PredictionSet::empty(2));
        assert_eq!((a, v), (0, 1.0)); // lowest action index among ties
    }

    #[test]
    fn set_at_coverage_identity_examples() {
        let m = identity2();
        let f = Forecast::new(vec![0.7, 0.3]).unwrap();

        // Brute force over all 3 nonempty subsets with mass >= 0.6 gives {y0}.
        let d = set_at_coverage(&m, &f, 0.6).unwrap();
        assert_eq!(d.set.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!((d.action, d.value), (0, 1.0));
        assert!(d.set.mass(&f) >= 0.6);

        // Only the full set reaches mass 0.9.
        let d = set_at_coverage(&m, &f, 0.9).unwrap();
        assert_eq!(d.set.len(), 2);
        assert_eq!(d.value, 0.0);

        // t = 0 certifies the table maximum.
        let d = set_at_coverage(&m, &f, 0.0).unwrap();
        assert_eq!(d.value, m.u_max());

        assert!(set_at_coverage(&m, &f, -0.2).is_err());
    }

    #[test]
    fn set_at_beta_identity_examples() {
        let m = identity2();
        let f = Forecast::new(vec![0.7, 0.3]).unwrap();

        let d = set_at_beta(&m, &f, 0.5).unwrap();
        assert_eq!(d.set.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(d.value, 1.0);

        let d = set_at_beta(&m, &f, 4.0).unwrap();
        assert_eq!(d.set.len(), 2);
        assert_eq!(d.value, 0.0);

        let point = Forecast::new(vec![0.0, 1.0]).unwrap();
        let d = set_at_beta(&m, &point, 0.0).unwrap();
        assert_eq!(d.set.iter().collect::<Vec<_>>(), vec![1]);
        assert_eq!(d.value, 1.0);
    }

    #[test]
    fn original_scale_values_come_from_original_table() {
        let m = crate::testutil::recommend2x5();
        // Working scale is shifted by +2; a singleton on rating 5 certifies
        // 4 internally but +2 on the original scale.
        let d = set_at_coverage(&m, &Forecast::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(), 0.5)
            .unwrap();
        assert_eq!(d.value, 4.0);
        assert_eq!(d.original_value(&m), 2.0);
        assert_eq!(d.original_realized(&m, 0), -2.0);
    }

    proptest! {
        /// A common shift moves every certificate by the shift and never
        /// changes the chosen action, for any prediction set.
        #[test]
        fn maxmin_is_shift_invariant(
            (m, _) in arb_instance(4, 5),
            mask in 0usize..32,
            quarter_steps in 0u8..=16,
        ) {
            let k = m.n_labels();
            let set = PredictionSet::from_members(k, (0..k).filter(|y| mask >> y & 1 == 1));
            let c = f64::from(quarter_steps) * 0.25;
            let shifted = m.shift_by(c).unwrap();
            let (a0, v0) = maxmin(&m, &set);
            let (a1, v1) = maxmin(&shifted, &set);
            prop_assert_eq!(a0, a1);
            prop_assert_eq!(v0 + c, v1);
        }

        /// Certificate soundness: every member of the set clears the value.
        #[test]
        fn certificates_are_sound((m, f) in arb_instance(4, 5), t in 0.0f64..=1.0) {
            let d = set_at_coverage(&m, &f, t).unwrap();
            prop_assert!(d.set.mass(&f) >= t);
            for y in d.set.iter() {
                prop_assert!(m.value(d.action, y) >= d.value);
            }
        }

        /// Value falls and coverage rises as beta buys more coverage. The
        /// sets themselves need not be nested and no such claim is tested.
        #[test]
        fn beta_sweep_is_monotone_conservative((m, f) in arb_instance(4, 5)) {
            let menu = CoverageMenu::build(&m, &f).unwrap();
            let mut grid = menu.breakpoints();
            grid.extend((0..20).map(|i| f64::from(i) * 0.45));
            grid.sort_by(f64::total_cmp);
            let mut last_value = f64::INFINITY;
            let mut last_mass = -1.0;
            for b in grid {
                let d = set_at_beta(&m, &f, b).unwrap();
                prop_assert!(!d.set.is_empty());
                let mass = d.set.mass(&f);
                prop_assert!(d.value <= last_value);
                prop_assert!(mass >= last_mass);
                last_value = d.value;
                last_mass = mass;
            }
        }
    }
}
