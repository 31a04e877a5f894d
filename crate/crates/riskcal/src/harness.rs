//! Seeded synthetic data, the four evaluation metrics, coverage Monte
//! Carlo, and miscoverage sweeps.
//!
//! Randomness discipline: one 64-bit seed, with every logical draw site
//! (calibration row, test row, trial row, bootstrap resample) owning its own
//! counter-derived stream. Trials and rows can therefore run in any order,
//! in parallel, and still reproduce bit-identically.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::baselines::{best_response, conformal_calibrate, conformal_set, ScoreKind};
use crate::decision::{decide, CertifiedDecision};
use crate::error::{Error, Result};
use crate::model::{Dataset, Forecast, LabeledSample, UtilityMatrix};
use crate::oracle::FinitePopulation;
use crate::par;
use crate::rac::{RacCalibrator, RacConfig};

// Stream domains, so no two draw sites share a stream.
const D_CALIB: u64 = 0;
const D_TEST: u64 = 1;
const D_TRIAL: u64 = 2;
const D_BOOTSTRAP: u64 = 3;

fn mix(x: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// An independent generator for the draw site identified by `path`.
fn stream_rng(seed: u64, path: &[u64]) -> ChaCha12Rng {
    let mut s = mix(seed);
    for &p in path {
        s = mix(s ^ mix(p));
    }
    ChaCha12Rng::seed_from_u64(s)
}

/// Forecast quality in synthetic suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ForecastNoise {
    /// Forecasts equal the true conditionals.
    WellSpecified,
    /// Forecasts drawn from a Dirichlet centered on the conditional with
    /// concentration `kappa` (larger is closer to well-specified).
    Dirichlet { kappa: f64 },
}

impl ForecastNoise {
    pub fn validate(&self) -> Result<()> {
        if let ForecastNoise::Dirichlet { kappa } = self {
            if !(kappa.is_finite() && *kappa > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "dirichlet concentration {kappa} must be positive and finite"
                )));
            }
        }
        Ok(())
    }

    fn echo(&self) -> serde_json::Value {
        match self {
            ForecastNoise::WellSpecified => serde_json::json!("inf"),
            ForecastNoise::Dirichlet { kappa } => serde_json::json!(kappa),
        }
    }
}

/// A fully seeded synthetic experiment description.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub population: FinitePopulation,
    pub noise: ForecastNoise,
    pub n_calib: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Smoothing applied to every generated forecast.
    pub epsilon: f64,
}

impl SyntheticSpec {
    pub fn config_echo(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "n_calib": self.n_calib,
            "n_test": self.n_test,
            "kappa": self.noise.echo(),
            "epsilon": self.epsilon,
            "atoms": self.population.atoms().len(),
        })
    }
}

fn draw_index(rng: &mut ChaCha12Rng, cumulative_weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    cumulative_weights
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative_weights.len() - 1)
}

/// One synthetic row: pick an atom, draw the label from its conditional,
/// and emit a (possibly noisy) smoothed forecast of that conditional.
fn draw_row(
    population: &FinitePopulation,
    noise: ForecastNoise,
    epsilon: f64,
    rng: &mut ChaCha12Rng,
) -> Result<LabeledSample> {
    let atoms = population.atoms();
    let mut cum = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.weight;
        cum.push(acc);
    }
    let atom = &atoms[draw_index(rng, &cum)];
    let q = atom.conditional.probs();

    let mut label_cum = Vec::with_capacity(q.len());
    let mut lacc = 0.0;
    for &p in q {
        lacc += p;
        label_cum.push(lacc);
    }
    let label = draw_index(rng, &label_cum);

    let raw: Vec<f64> = match noise {
        ForecastNoise::WellSpecified => q.to_vec(),
        ForecastNoise::Dirichlet { kappa } => {
            // Gamma construction; zero-mass coordinates stay exactly zero.
            let mut draws = Vec::with_capacity(q.len());
            for &p in q {
                let shape = kappa * p;
                if shape > 0.0 {
                    let gamma = Gamma::new(shape, 1.0).map_err(|e| {
                        Error::InvalidParameter(format!("gamma shape {shape}: {e}"))
                    })?;
                    draws.push(gamma.sample(rng));
                } else {
                    draws.push(0.0);
                }
            }
            let total: f64 = draws.iter().sum();
            if total <= 0.0 {
                // Astronomically unlikely underflow; fall back to the mean.
                q.to_vec()
            } else {
                draws.iter().map(|d| d / total).collect()
            }
        }
    };
    Ok(LabeledSample { forecast: Forecast::smoothed(&raw, epsilon)?, label })
}

/// Seeded calibration and test datasets. Test labels are the hidden truth;
/// evaluation consumes them, methods must not.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.noise.validate()?;
    let k = spec.population.n_labels();
    let calib_rows = par::try_map_range(spec.n_calib, |i| {
        let mut rng = stream_rng(spec.seed, &[D_CALIB, i as u64]);
        draw_row(&spec.population, spec.noise, spec.epsilon, &mut rng)
    })?;
    let test_rows = par::try_map_range(spec.n_test, |i| {
        let mut rng = stream_rng(spec.seed, &[D_TEST, i as u64]);
        draw_row(&spec.population, spec.noise, spec.epsilon, &mut rng)
    })?;
    Ok((Dataset::new(calib_rows, k)?, Dataset::new(test_rows, k)?))
}

/// Which labels count as critical and which actions count as the worst
/// response to each label. Worst actions default to the per-label argmin of
/// the utility table, ties included.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSpec {
    critical: Vec<bool>,
    worst: Vec<Vec<bool>>,
}

impl CriticalSpec {
    pub fn new(matrix: &UtilityMatrix, critical_labels: &[usize]) -> Result<Self> {
        let k = matrix.n_labels();
        let mut critical = vec![false; k];
        for &y in critical_labels {
            if y >= k {
                return Err(Error::InvalidParameter(format!(
                    "critical label index {y} out of range ({k} labels)"
                )));
            }
            critical[y] = true;
        }
        let worst = (0..k)
            .map(|y| {
                let min = (0..matrix.n_actions())
                    .map(|a| matrix.value(a, y))
                    .fold(f64::INFINITY, f64::min);
                (0..matrix.n_actions()).map(|a| matrix.value(a, y) == min).collect()
            })
            .collect();
        Ok(Self { critical, worst })
    }

    /// No labels marked critical; the mistake-rate metric reports null.
    pub fn none(matrix: &UtilityMatrix) -> Self {
        Self::new(matrix, &[]).expect("empty critical set is valid")
    }

    pub fn is_critical(&self, label: usize) -> bool {
        self.critical[label]
    }

    pub fn is_worst(&self, label: usize, action: usize) -> bool {
        self.worst[label][action]
    }
}

/// The comparator menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rac,
    Score1,
    Score2,
    BestResponse,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rac => "rac",
            Method::Score1 => "score1",
            Method::Score2 => "score2",
            Method::BestResponse => "best-response",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rac" => Ok(Method::Rac),
            "score1" => Ok(Method::Score1),
            "score2" => Ok(Method::Score2),
            "best-response" => Ok(Method::BestResponse),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected rac | score1 | score2 | best-response)"
            ))),
        }
    }

    pub fn emits_sets(&self) -> bool {
        !matches!(self, Method::BestResponse)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-method output: certified set decisions, or bare actions for the
/// point-decision baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodRun {
    Decisions(Vec<CertifiedDecision>),
    Actions(Vec<usize>),
}

/// Runs one method on shared (calibration, test) data.
pub fn run_method(
    method: Method,
    matrix: &UtilityMatrix,
    calib: &Dataset,
    tests: &[Forecast],
    cfg: RacConfig,
) -> Result<MethodRun> {
    match method {
        Method::Rac => {
            let cal = RacCalibrator::new(matrix, calib, cfg)?;
            let preds = cal.predict_batch(tests)?;
            Ok(MethodRun::Decisions(preds.into_iter().map(|p| p.decision).collect()))
        }
        Method::Score1 | Method::Score2 => {
            let kind = if method == Method::Score1 { ScoreKind::Score1 } else { ScoreKind::Score2 };
            let thr = conformal_calibrate(calib, kind, cfg.alpha)?;
            let decisions = par::try_map_range(tests.len(), |i| {
                Ok::<_, Error>(decide(matrix, conformal_set(&tests[i], &thr)))
            })?;
            Ok(MethodRun::Decisions(decisions))
        }
        Method::BestResponse => {
            let actions = par::try_map_range(tests.len(), |i| best_response(matrix, &tests[i]))?;
            Ok(MethodRun::Actions(actions))
        }
    }
}

/// The four headline metrics for one method at one miscoverage level.
/// Set-dependent metrics are null for set-free methods; mistake rate is
/// null when no test row has a critical true label. All utilities are on
/// the caller's original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub alpha: f64,
    pub n_test: usize,
    pub avg_maxmin_value: Option<f64>,
    pub critical_mistake_rate: Option<f64>,
    pub avg_realized_utility: f64,
    pub miscoverage: Option<f64>,
    pub config: serde_json::Value,
}

/// One emitted row of an evaluation, sufficient to recompute every metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<Vec<String>>,
    pub action: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<f64>,
    pub y: String,
    pub realized_utility: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covered: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub empty_set: Option<bool>,
}

/// Computes the metric report plus the per-row records it is derived from.
/// `method_name` is echoed verbatim so externally ingested sets can carry
/// their own label.
pub fn evaluate(
    matrix: &UtilityMatrix,
    run: &MethodRun,
    truths: &[usize],
    crit: &CriticalSpec,
    method_name: &str,
    alpha: f64,
    config: serde_json::Value,
) -> Result<(Report, Vec<RowRecord>)> {
    let n = truths.len();
    let run_len = match run {
        MethodRun::Decisions(d) => d.len(),
        MethodRun::Actions(a) => a.len(),
    };
    if run_len != n {
        return Err(Error::InvalidParameter(format!(
            "{run_len} decisions for {n} truth labels"
        )));
    }

    let mut rows = Vec::with_capacity(n);
    let mut sum_maxmin = 0.0;
    let mut sum_realized = 0.0;
    let mut misses = 0usize;
    let mut critical_rows = 0usize;
    let mut critical_mistakes = 0usize;

    for i in 0..n {
        let truth = truths[i];
        let (action, cert, covered, set_names, empty) = match run {
            MethodRun::Decisions(ds) => {
                let d = &ds[i];
                let cert = d.original_value(matrix);
                sum_maxmin += cert;
                let covered = d.set.contains(truth);
                if !covered {
                    misses += 1;
                }
                let names: Vec<String> =
                    d.set.iter().map(|y| matrix.label_name(y).to_string()).collect();
                (d.action, Some(cert), Some(covered), Some(names), d.set.is_empty())
            }
            MethodRun::Actions(actions) => (actions[i], None, None, None, false),
        };
        let realized = matrix.original_value(action, truth);
        sum_realized += realized;
        if crit.is_critical(truth) {
            critical_rows += 1;
            if crit.is_worst(truth, action) {
                critical_mistakes += 1;
            }
        }
        rows.push(RowRecord {
            set: set_names,
            action: matrix.action_name(action).to_string(),
            certificate: cert,
            y: matrix.label_name(truth).to_string(),
            realized_utility: realized,
            covered,
            empty_set: empty.then_some(true),
        });
    }

    let n_f = n as f64;
    let is_sets = matches!(run, MethodRun::Decisions(_));
    let report = Report {
        method: method_name.to_string(),
        alpha,
        n_test: n,
        avg_maxmin_value: (is_sets && n > 0).then(|| sum_maxmin / n_f),
        critical_mistake_rate: (critical_rows > 0)
            .then(|| critical_mistakes as f64 / critical_rows as f64),
        avg_realized_utility: if n > 0 { sum_realized / n_f } else { 0.0 },
        miscoverage: (is_sets && n > 0).then(|| misses as f64 / n_f),
        config,
    };
    Ok((report, rows))
}

/// One Monte Carlo trial outcome at one miscoverage level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub covered: bool,
    /// Certificate on the original scale.
    pub certificate: f64,
    /// Realized utility of the max-min action on the original scale.
    pub realized_utility: f64,
    pub set_size: usize,
    pub empty_set: bool,
}

/// Aggregate coverage for one (alpha, method) cell.
#[derive(Debug, Clone, Serialize)]
pub struct McCell {
    pub method: String,
    pub alpha: f64,
    pub trials: usize,
    pub empirical_coverage: f64,
    /// Binomial standard error of the empirical coverage.
    pub stderr: f64,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// The seeded sampling scheme for one Monte Carlo study.
#[derive(Debug, Clone)]
pub struct McSetup<'a> {
    pub population: &'a FinitePopulation,
    pub noise: ForecastNoise,
    pub n_calib: usize,
    pub epsilon: f64,
    pub seed: u64,
}

/// Coverage Monte Carlo: each trial draws `n_calib + 1` exchangeable rows,
/// holds the last out as the test point, and checks whether its true label
/// lands in the emitted set. Set construction work is shared across the
/// requested `alphas` within each trial.
pub fn coverage_mc(
    matrix: &UtilityMatrix,
    setup: &McSetup<'_>,
    alphas: &[f64],
    trials: usize,
    method: Method,
    cfg: RacConfig,
) -> Result<Vec<McCell>> {
    let &McSetup { population, noise, n_calib, epsilon, seed } = setup;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    if n_calib == 0 {
        return Err(Error::InvalidDataset("coverage trials need n_calib >= 1".into()));
    }
    if !method.emits_sets() {
        return Err(Error::InvalidParameter(format!(
            "method {method} emits no prediction sets; coverage is undefined"
        )));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("no alpha levels requested".into()));
    }
    noise.validate()?;
    let k = population.n_labels();

    // per trial, per alpha: one record
    let per_trial: Vec<Vec<TrialRecord>> = par::try_map_range(trials, |t| {
        let mut rows = Vec::with_capacity(n_calib + 1);
        for i in 0..=n_calib {
            let mut rng = stream_rng(seed, &[D_TRIAL, t as u64, i as u64]);
            rows.push(draw_row(population, noise, epsilon, &mut rng)?);
        }
        let test = rows.pop().expect("n_calib + 1 rows drawn");
        let truth = test.label;
        let calib = Dataset::new(rows, k)?;

        let mut records = Vec::with_capacity(alphas.len());
        match method {
            Method::Rac => {
                let cal = RacCalibrator::new(matrix, &calib, RacConfig {
                    alpha: alphas[0],
                    ..cfg
                })?;
                let search = cal.prepare(&test.forecast)?;
                for &alpha in alphas {
                    let pred = search.solve(alpha)?;
                    records.push(trial_record(matrix, t, &pred.decision, truth));
                }
            }
            Method::Score1 | Method::Score2 => {
                let kind = if method == Method::Score1 {
                    ScoreKind::Score1
                } else {
                    ScoreKind::Score2
                };
                for &alpha in alphas {
                    let thr = conformal_calibrate(&calib, kind, alpha)?;
                    let d = decide(matrix, conformal_set(&test.forecast, &thr));
                    records.push(trial_record(matrix, t, &d, truth));
                }
            }
            Method::BestResponse => unreachable!("rejected above"),
        }
        Ok::<_, Error>(records)
    })?;

    let mut cells = Vec::with_capacity(alphas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        let records: Vec<TrialRecord> = per_trial.iter().map(|r| r[ai].clone()).collect();
        let hits = records.iter().filter(|r| r.covered).count();
        let p = hits as f64 / trials as f64;
        cells.push(McCell {
            method: method.name().to_string(),
            alpha,
            trials,
            empirical_coverage: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
            records,
        });
    }
    Ok(cells)
}

fn trial_record(
    matrix: &UtilityMatrix,
    trial: usize,
    decision: &CertifiedDecision,
    truth: usize,
) -> TrialRecord {
    TrialRecord {
        trial,
        covered: decision.set.contains(truth),
        certificate: decision.original_value(matrix),
        realized_utility: decision.original_realized(matrix, truth),
        set_size: decision.set.len(),
        empty_set: decision.set.is_empty(),
    }
}

/// One report per (alpha, method), every cell sharing the same seeded
/// calibration/test draw for paired comparison. Duplicate alphas produce
/// duplicate rows by design.
pub fn sweep_alpha(
    matrix: &UtilityMatrix,
    spec: &SyntheticSpec,
    alphas: &[f64],
    methods: &[Method],
    crit: &CriticalSpec,
    cfg: RacConfig,
) -> Result<Vec<Report>> {
    let (calib, test) = generate(spec)?;
    let tests = test.forecasts();
    let truths = test.labels();
    let mut reports = Vec::with_capacity(alphas.len() * methods.len());
    for &alpha in alphas {
        for &method in methods {
            let run = run_method(method, matrix, &calib, &tests, RacConfig { alpha, ..cfg })?;
            let (report, _) =
                evaluate(matrix, &run, &truths, crit, method.name(), alpha, spec.config_echo())?;
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Standard error of a mean difference via seeded bootstrap resampling.
pub fn paired_bootstrap_stderr(diffs: &[f64], resamples: usize, seed: u64) -> f64 {
    if diffs.len() < 2 || resamples < 2 {
        return 0.0;
    }
    let n = diffs.len();
    let means: Vec<f64> = par::map_range(resamples, |b| {
        let mut rng = stream_rng(seed, &[D_BOOTSTRAP, b as u64]);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += diffs[rng.random_range(0..n)];
        }
        sum / n as f64
    });
    let grand = means.iter().sum::<f64>() / resamples as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    var.sqrt()
}
