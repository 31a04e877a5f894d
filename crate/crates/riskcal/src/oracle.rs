//! Exact population-regime solvers over finite discrete distributions, and
//! the desk-scale brute forces that check them.
//!
//! A `FinitePopulation` is a weighted list of atoms, each carrying a
//! conditional label distribution. Three routes to the optimal average
//! certificate live here:
//!
//! - `solve_population`: the one-dimensional dual construction. Scan the
//!   pooled breakpoint candidates for the smallest multiplier whose
//!   aggregate selected coverage reaches `1 - alpha`, then threshold each
//!   atom at that price. Reports the aggregate certificate, the achieved
//!   coverage, and the dual upper bound
//!   `sum_i w_i (v_i + beta* s_i) - beta* (1 - alpha)`.
//! - `brute_force_population`: exhaustive optima of the set-valued program
//!   (choose a label subset per atom) and the policy-valued program (choose
//!   an action and a certificate level per atom) under the same marginal
//!   coverage constraint. The two optima coincide; the solver returns both
//!   plus witnesses so tests can assert it.
//! - `best_subset_at_coverage`: per-forecast exhaustive maximizer, the
//!   oracle that `set_at_coverage` is checked against.
//!
//! With finitely many atoms the dual multiplier cannot split an atom, so a
//! duality gap of `beta* x (coverage overshoot)` remains; it is reported,
//! not hidden, and shrinks as atoms are refined.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::decision::{decide, maxmin, CertifiedDecision, PredictionSet};
use crate::error::{Error, Result};
use crate::menu::CoverageMenu;
use crate::model::{mass_of, Forecast, UtilityMatrix};

/// Caps keeping the brute-force cross products at desk scale.
const BRUTE_MAX_ATOMS: usize = 5;
const BRUTE_MAX_LABELS: usize = 4;
const SUBSET_MAX_LABELS: usize = 20;

/// One population atom: marginal weight and conditional label distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub conditional: Forecast,
}

/// A finite discrete population: weights summing to one over conditional
/// label distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    atoms: Vec<Atom>,
}

impl FinitePopulation {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidPopulation("no atoms".into()));
        }
        let k = atoms[0].conditional.n_labels();
        let mut total = 0.0;
        for (i, a) in atoms.iter().enumerate() {
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(Error::InvalidPopulation(format!(
                    "atom {i} weight {} must be positive",
                    a.weight
                )));
            }
            if a.conditional.n_labels() != k {
                return Err(Error::InvalidPopulation(format!(
                    "atom {i} has {} labels, expected {k}",
                    a.conditional.n_labels()
                )));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPopulation(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn n_labels(&self) -> usize {
        self.atoms[0].conditional.n_labels()
    }

    /// Splits every atom into `factor` equal-weight copies whose
    /// conditionals are mixed with a seeded random distribution by `jitter`.
    /// Refinement narrows the discrete duality gap.
    pub fn refined(&self, factor: usize, jitter: f64, seed: u64) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter("refinement factor must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&jitter) {
            return Err(Error::InvalidParameter(format!("jitter {jitter} outside [0, 1)")));
        }
        let k = self.n_labels();
        let mut atoms = Vec::with_capacity(self.atoms.len() * factor);
        for (i, atom) in self.atoms.iter().enumerate() {
            for j in 0..factor {
                // order-sensitive chaining keeps (i, j) streams distinct
                let stream = mix(mix(seed ^ mix(i as u64)) ^ mix(j as u64));
                let mut rng = ChaCha12Rng::seed_from_u64(stream);
                let mut noise: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                let norm: f64 = noise.iter().sum();
                for n in &mut noise {
                    *n /= norm;
                }
                let q: Vec<f64> = atom
                    .conditional
                    .probs()
                    .iter()
                    .zip(&noise)
                    .map(|(&p, &n)| (1.0 - jitter) * p + jitter * n)
                    .collect();
                atoms.push(Atom {
                    weight: atom.weight / factor as f64,
                    conditional: Forecast::new(q)?,
                });
            }
        }
        Self::new(atoms)
    }
}

fn mix(x: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-atom outcome of the dual construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSolution {
    /// Coverage assigned to this atom at the calibrated price.
    pub coverage: f64,
    pub decision: CertifiedDecision,
}

/// Output of `solve_population`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSolution {
    pub beta_star: f64,
    pub per_atom: Vec<AtomSolution>,
    /// Aggregate certificate `sum_i w_i v_i` (working scale).
    pub objective: f64,
    /// Aggregate selected coverage `sum_i w_i s_i`, at least `1 - alpha`.
    pub achieved_coverage: f64,
    /// Slack over the target: `achieved_coverage - (1 - alpha)`.
    pub coverage_slack: f64,
    /// `sum_i w_i (v_i + beta* s_i) - beta* (1 - alpha)`; upper-bounds every
    /// feasible aggregate certificate.
    pub dual_bound: f64,
    /// `dual_bound - objective` = `beta* x coverage_slack`.
    pub duality_gap: f64,
}

/// Dual construction: smallest pooled candidate multiplier whose aggregate
/// selected coverage reaches `1 - alpha`, then per-atom threshold sets.
pub fn solve_population(
    population: &FinitePopulation,
    matrix: &UtilityMatrix,
    alpha: f64,
) -> Result<PopulationSolution> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if population.n_labels() != matrix.n_labels() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_labels(),
            got: population.n_labels(),
        });
    }
    let menus: Vec<CoverageMenu> = population
        .atoms()
        .iter()
        .map(|a| CoverageMenu::build(matrix, &a.conditional))
        .collect::<Result<_>>()?;

    let mut pooled: Vec<f64> = menus.iter().flat_map(|m| m.breakpoints()).collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let mut candidates = Vec::with_capacity(2 * pooled.len() + 2);
    candidates.push(0.0);
    for (i, &b) in pooled.iter().enumerate() {
        candidates.push(b);
        if let Some(&next) = pooled.get(i + 1) {
            candidates.push(0.5 * (b + next));
        }
    }
    if let Some(&last) = pooled.last() {
        candidates.push(last * (1.0 + 1e-9) + 1e-12);
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let target = 1.0 - alpha;
    let mut chosen = None;
    for &beta in &candidates {
        let mut agg = 0.0;
        for (atom, menu) in population.atoms().iter().zip(&menus) {
            agg += atom.weight * menu.select(beta)?.coverage;
        }
        if agg >= target {
            chosen = Some((beta, agg));
            break;
        }
    }
    // The guard candidate selects full coverage everywhere, so aggregate
    // coverage there is 1 > 1 - alpha; the scan cannot come up empty.
    let (beta_star, achieved_coverage) = chosen.ok_or_else(|| {
        Error::Infeasible("no multiplier reaches the aggregate coverage target".into())
    })?;

    let mut per_atom = Vec::with_capacity(population.atoms().len());
    let mut objective = 0.0;
    let mut dual_bound = -beta_star * target;
    for (atom, menu) in population.atoms().iter().zip(&menus) {
        let entry = menu.select(beta_star)?;
        let set = PredictionSet::utility_tail(matrix, entry.action, entry.value);
        let decision = decide(matrix, set);
        objective += atom.weight * decision.value;
        dual_bound += atom.weight * (entry.value + beta_star * entry.coverage);
        per_atom.push(AtomSolution { coverage: entry.coverage, decision });
    }
    Ok(PopulationSolution {
        beta_star,
        per_atom,
        objective,
        achieved_coverage,
        coverage_slack: achieved_coverage - target,
        dual_bound,
        duality_gap: dual_bound - objective,
    })
}

/// Exhaustive optima of the two finite programs.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    /// Optimal aggregate certificate over per-atom label subsets.
    pub set_program_opt: f64,
    /// Optimal aggregate certificate over per-atom (action, level) pairs.
    pub policy_program_opt: f64,
    /// Witness subsets, one per atom.
    pub set_witness: Vec<PredictionSet>,
    /// Witness (action, certificate level) pairs, one per atom.
    pub policy_witness: Vec<(usize, f64)>,
}

impl BruteForceResult {
    /// |set optimum - policy optimum|; zero up to float noise.
    pub fn equivalence_gap(&self) -> f64 {
        (self.set_program_opt - self.policy_program_opt).abs()
    }
}

/// Exhaustively solves both population programs under the marginal coverage
/// constraint `sum_i w_i cover_i >= 1 - alpha`.
///
/// The set program ranges over all label subsets per atom (the empty set
/// certifies the table maximum at zero coverage). The policy program ranges
/// over actions paired with certificate levels drawn from that action's
/// attainable utilities plus the table maximum; levels between attainable
/// utilities change nothing, so the restriction is lossless.
pub fn brute_force_population(
    population: &FinitePopulation,
    matrix: &UtilityMatrix,
    alpha: f64,
) -> Result<BruteForceResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    let n_atoms = population.atoms().len();
    let k = population.n_labels();
    if n_atoms > BRUTE_MAX_ATOMS || k > BRUTE_MAX_LABELS {
        return Err(Error::TooLarge(format!(
            "brute force limited to {BRUTE_MAX_ATOMS} atoms x {BRUTE_MAX_LABELS} labels, \
             got {n_atoms} x {k}"
        )));
    }
    if population.n_labels() != matrix.n_labels() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_labels(),
            got: population.n_labels(),
        });
    }
    let target = 1.0 - alpha;
    let weights: Vec<f64> = population.atoms().iter().map(|a| a.weight).collect();

    // ---- set program: per-atom subsets ----
    let n_masks = 1usize << k;
    let subset_choices: Vec<Vec<(f64, f64)>> = population
        .atoms()
        .iter()
        .map(|atom| {
            (0..n_masks)
                .map(|mask| {
                    let set =
                        PredictionSet::from_members(k, (0..k).filter(|y| mask >> y & 1 == 1));
                    let (_, value) = maxmin(matrix, &set);
                    (set.mass(&atom.conditional), value)
                })
                .collect()
        })
        .collect();
    let best_sets = maximize_over_product(&weights, &subset_choices, target);
    let (set_program_opt, set_choice) = best_sets.ok_or_else(|| {
        Error::Infeasible("set program infeasible (cannot happen for alpha > 0)".into())
    })?;
    let set_witness = set_choice
        .iter()
        .map(|&mask| PredictionSet::from_members(k, (0..k).filter(|y| mask >> y & 1 == 1)))
        .collect();

    // ---- policy program: per-atom (action, level) pairs ----
    let mut policy_pairs: Vec<(usize, f64)> = Vec::new();
    for a in 0..matrix.n_actions() {
        let mut levels: Vec<f64> = matrix.row(a).to_vec();
        levels.push(matrix.u_max());
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        policy_pairs.extend(levels.into_iter().map(|nu| (a, nu)));
    }
    let policy_choices: Vec<Vec<(f64, f64)>> = population
        .atoms()
        .iter()
        .map(|atom| {
            policy_pairs
                .iter()
                .map(|&(a, nu)| {
                    let row = matrix.row(a);
                    let cover =
                        mass_of(&atom.conditional, (0..k).filter(|&y| row[y] >= nu));
                    (cover, nu)
                })
                .collect()
        })
        .collect();
    let best_policy = maximize_over_product(&weights, &policy_choices, target);
    let (policy_program_opt, policy_choice) = best_policy.ok_or_else(|| {
        Error::Infeasible("policy program infeasible (cannot happen for alpha > 0)".into())
    })?;
    let policy_witness = policy_choice.iter().map(|&idx| policy_pairs[idx]).collect();

    Ok(BruteForceResult {
        set_program_opt,
        policy_program_opt,
        set_witness,
        policy_witness,
    })
}

/// Maximizes `sum_i w_i value_i` over the cross product of per-atom
/// `(cover, value)` choices subject to `sum_i w_i cover_i >= target`.
/// Returns the optimum and the chosen index per atom.
fn maximize_over_product(
    weights: &[f64],
    choices: &[Vec<(f64, f64)>],
    target: f64,
) -> Option<(f64, Vec<usize>)> {
    let n = weights.len();
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut cover = 0.0;
        let mut value = 0.0;
        for i in 0..n {
            let (c, v) = choices[i][idx[i]];
            cover += weights[i] * c;
            value += weights[i] * v;
        }
        if cover >= target {
            match &best {
                Some((b, _)) if *b >= value => {}
                _ => best = Some((value, idx.clone())),
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Exhaustive maximizer of the max-min value over nonempty label subsets
/// with forecast mass at least `t`.
pub fn best_subset_at_coverage(
    matrix: &UtilityMatrix,
    forecast: &Forecast,
    t: f64,
) -> Result<(PredictionSet, f64)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "coverage target {t} outside [0, 1]"
        )));
    }
    let k = matrix.n_labels();
    if k > SUBSET_MAX_LABELS {
        return Err(Error::TooLarge(format!(
            "subset scan limited to {SUBSET_MAX_LABELS} labels, got {k}"
        )));
    }
    if forecast.n_labels() != k {
        return Err(Error::DimensionMismatch { expected: k, got: forecast.n_labels() });
    }
    let mut best: Option<(PredictionSet, f64)> = None;
    for mask in 1usize..(1 << k) {
        let set = PredictionSet::from_members(k, (0..k).filter(|y| mask >> y & 1 == 1));
        if set.mass(forecast) < t {
            continue;
        }
        let (_, value) = maxmin(matrix, &set);
        match &best {
            Some((_, b)) if *b >= value => {}
            _ => best = Some((set, value)),
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!("no nonempty subset reaches forecast mass {t}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::set_at_coverage;
    use crate::testutil::{arb_instance, clinical4, identity2};
    use proptest::prelude::*;

    fn single_atom(q: Vec<f64>) -> FinitePopulation {
        FinitePopulation::new(vec![Atom { weight: 1.0, conditional: Forecast::new(q).unwrap() }])
            .unwrap()
    }

    #[test]
    fn population_validation() {
        assert!(FinitePopulation::new(vec![]).is_err());
        let f = Forecast::new(vec![1.0]).unwrap();
        assert!(FinitePopulation::new(vec![Atom { weight: 0.4, conditional: f.clone() }]).is_err());
        assert!(FinitePopulation::new(vec![Atom { weight: -1.0, conditional: f }]).is_err());
    }

    #[test]
    fn solve_single_atom_identity() {
        let m = identity2();
        let pop = single_atom(vec![0.7, 0.3]);
        let sol = solve_population(&pop, &m, 0.3).unwrap();
        assert_eq!(sol.beta_star, 0.0);
        assert_eq!(sol.achieved_coverage, 0.7);
        assert_eq!(sol.objective, 1.0);
        assert_eq!(sol.duality_gap, 0.0);
        // Exhaustive over the 3 nonempty subsets confirms the optimum.
        let (_, oracle) = best_subset_at_coverage(&m, &pop.atoms()[0].conditional, 0.7).unwrap();
        assert_eq!(oracle, 1.0);
    }

    #[test]
    fn solve_rejects_bad_alpha() {
        let m = identity2();
        let pop = single_atom(vec![0.5, 0.5]);
        assert!(solve_population(&pop, &m, 0.0).is_err());
        assert!(solve_population(&pop, &m, 1.0).is_err());
    }

    #[test]
    fn solve_point_mass_atom() {
        let m = clinical4();
        let pop = single_atom(vec![0.0, 0.0, 1.0, 0.0]);
        let sol = solve_population(&pop, &m, 0.2).unwrap();
        let atom = &sol.per_atom[0];
        assert_eq!(atom.decision.set.iter().collect::<Vec<_>>(), vec![2]);
        assert_eq!(sol.objective, 10.0); // quarantine on a certain case
    }

    #[test]
    fn brute_force_single_atom_matches() {
        let m = identity2();
        let pop = single_atom(vec![0.7, 0.3]);
        let bf = brute_force_population(&pop, &m, 0.3).unwrap();
        assert_eq!(bf.set_program_opt, 1.0);
        assert_eq!(bf.policy_program_opt, 1.0);
        assert!(bf.equivalence_gap() <= 1e-12);
    }

    #[test]
    fn brute_force_forced_full_sets() {
        // alpha so small that only full coverage per atom is feasible: the
        // objective drops to the full-set max-min value.
        let m = identity2();
        let pop = single_atom(vec![0.7, 0.3]);
        let bf = brute_force_population(&pop, &m, 0.05).unwrap();
        assert_eq!(bf.set_program_opt, 0.0);
        assert_eq!(bf.policy_program_opt, 0.0);
    }

    #[test]
    fn brute_force_two_opposed_atoms() {
        let m = identity2();
        let pop = FinitePopulation::new(vec![
            Atom { weight: 0.5, conditional: Forecast::new(vec![1.0, 0.0]).unwrap() },
            Atom { weight: 0.5, conditional: Forecast::new(vec![0.0, 1.0]).unwrap() },
        ])
        .unwrap();
        // Each atom's own singleton has conditional mass 1, so even a tight
        // constraint keeps the per-atom certificates at 1.
        let bf = brute_force_population(&pop, &m, 0.01).unwrap();
        assert_eq!(bf.set_program_opt, 1.0);
        assert_eq!(bf.policy_program_opt, 1.0);
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let m = identity2();
        let atoms: Vec<Atom> = (0..6)
            .map(|_| Atom {
                weight: 1.0 / 6.0,
                conditional: Forecast::new(vec![0.5, 0.5]).unwrap(),
            })
            .collect();
        // weights sum to 1 within tolerance
        let pop = FinitePopulation::new(atoms).unwrap();
        assert!(matches!(
            brute_force_population(&pop, &m, 0.1),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn best_subset_examples() {
        let m = identity2();
        let q = Forecast::new(vec![0.7, 0.3]).unwrap();
        let (set, value) = best_subset_at_coverage(&m, &q, 0.6).unwrap();
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(value, 1.0);

        let (set, value) = best_subset_at_coverage(&m, &q, 1.0).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(value, 0.0);

        let (_, value) = best_subset_at_coverage(&m, &q, 0.0).unwrap();
        assert_eq!(value, m.u_max());
    }

    #[test]
    fn refinement_shrinks_weights_not_mass() {
        let pop = single_atom(vec![0.6, 0.4]);
        let refined = pop.refined(10, 0.05, 7).unwrap();
        assert_eq!(refined.atoms().len(), 10);
        let total: f64 = refined.atoms().iter().map(|a| a.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    proptest! {
        /// The per-forecast constructor is exactly optimal: its certificate
        /// equals the exhaustive best subset value.
        #[test]
        fn set_at_coverage_matches_subset_oracle(
            (m, f) in arb_instance(4, 5),
            t_idx in 0usize..21,
        ) {
            let t = t_idx as f64 / 20.0;
            let d = set_at_coverage(&m, &f, t).unwrap();
            let (_, oracle) = best_subset_at_coverage(&m, &f, t).unwrap();
            prop_assert_eq!(d.value, oracle);
        }
    }
}
