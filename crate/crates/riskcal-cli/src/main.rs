//! `riskcal`: risk-averse decisions from probability forecasts.
//!
//! Subcommands: `predict` (calibrate + emit certified sets), `evaluate`
//! (score a method on labeled test data), `oracle` (exact population solver
//! with brute-force verification), `mc-coverage` (coverage Monte Carlo),
//! and `sweep-alpha` (metric curves over miscoverage levels).
//!
//! Exit codes: 0 success, 2 validation/parse error, 3 calibration
//! infeasibility.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use riskcal::decision::{decide, CertifiedDecision};
use riskcal::harness::{
    self, coverage_mc, sweep_alpha, CriticalSpec, ForecastNoise, McSetup, Method, MethodRun,
    SyntheticSpec,
};
use riskcal::io::{
    parse_population, parse_utility, read_dataset, read_external_sets, read_forecast_rows,
    write_decisions, write_menu_dump, write_sweep_csv,
};
use riskcal::menu::CoverageMenu;
use riskcal::oracle::{brute_force_population, solve_population, FinitePopulation};
use riskcal::{BetaMode, Dataset, Error, Forecast, RacCalibrator, RacConfig, UtilityMatrix};

#[derive(Parser)]
#[command(
    name = "riskcal",
    version,
    about = "Turn probability forecasts into risk-averse prediction sets, \
             max-min actions, and utility certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BetaModeArg {
    Exact,
    Grid,
}

impl From<BetaModeArg> for BetaMode {
    fn from(m: BetaModeArg) -> Self {
        match m {
            BetaModeArg::Exact => BetaMode::Exact,
            BetaModeArg::Grid => BetaMode::Grid,
        }
    }
}

#[derive(Args)]
struct CalibrationArgs {
    /// Miscoverage level in (0, 1)
    #[arg(long)]
    alpha: f64,
    /// Candidate multiplier search mode
    #[arg(long, value_enum, default_value_t = BetaModeArg::Exact)]
    beta_mode: BetaModeArg,
    /// Grid size when --beta-mode grid (or on exact-mode overflow)
    #[arg(long, default_value_t = 10_000)]
    grid_points: usize,
    /// Exact-mode candidate budget before falling back to a grid
    #[arg(long, default_value_t = 50_000)]
    candidate_cap: usize,
}

impl CalibrationArgs {
    fn config(&self) -> RacConfig {
        RacConfig {
            alpha: self.alpha,
            beta_mode: self.beta_mode.into(),
            grid_points: self.grid_points,
            candidate_cap: self.candidate_cap,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate on labeled forecasts and emit certified prediction sets
    Predict {
        /// Utility matrix JSON
        #[arg(long)]
        utility: PathBuf,
        /// Calibration JSONL (labels required)
        #[arg(long)]
        calib: PathBuf,
        /// Test JSONL (labels optional and ignored)
        #[arg(long)]
        test: PathBuf,
        /// Forecast smoothing applied at load
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[command(flatten)]
        cal: CalibrationArgs,
        /// Calibrate one shared multiplier on calibration rows alone
        #[arg(long)]
        split_beta: bool,
        /// Decision JSONL destination (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Calibration summary JSON destination (stdout, or stderr when
        /// decisions already go to stdout)
        #[arg(long)]
        summary_out: Option<PathBuf>,
        /// Debug: dump each test forecast's coverage menu as JSON lines
        #[arg(long)]
        dump_menus: Option<PathBuf>,
    },
    /// Score a method's decisions on labeled test data
    Evaluate {
        #[arg(long)]
        utility: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        /// Test JSONL (labels required)
        #[arg(long)]
        test: PathBuf,
        /// rac | score1 | score2 | best-response | external
        #[arg(long)]
        method: String,
        /// Externally produced prediction sets JSONL (method = external)
        #[arg(long)]
        sets: Option<PathBuf>,
        /// Critical labels (names or indices, comma separated)
        #[arg(long, value_delimiter = ',')]
        critical: Vec<String>,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[command(flatten)]
        cal: CalibrationArgs,
        /// Report JSON destination (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-row JSONL destination
        #[arg(long)]
        rows_out: Option<PathBuf>,
    },
    /// Exact population solver with brute-force verification
    Oracle {
        #[arg(long)]
        utility: PathBuf,
        /// Population JSON: {"atoms":[{"w":...,"q":[...]}]}
        #[arg(long)]
        population: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// Also solve an atom-refined copy (factor > 1 splits each atom)
        #[arg(long, default_value_t = 1)]
        refine: usize,
        /// Conditional jitter used when refining
        #[arg(long, default_value_t = 0.05)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coverage Monte Carlo over seeded synthetic trials
    McCoverage {
        #[arg(long)]
        utility: PathBuf,
        #[arg(long)]
        population: PathBuf,
        /// rac | score1 | score2
        #[arg(long, default_value = "rac")]
        method: String,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        n_calib: usize,
        /// Dirichlet concentration, or "inf" for well-specified forecasts
        #[arg(long, default_value = "inf")]
        kappa: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[command(flatten)]
        cal: CalibrationArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-trial JSONL destination
        #[arg(long)]
        rows_out: Option<PathBuf>,
    },
    /// Metric curves over a miscoverage sweep, one CSV row per (alpha, method)
    SweepAlpha {
        #[arg(long)]
        utility: PathBuf,
        #[arg(long)]
        population: PathBuf,
        /// Comma-separated miscoverage levels
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        /// Comma-separated methods (rac | score1 | score2 | best-response)
        #[arg(long, value_delimiter = ',', default_value = "rac,score1,score2,best-response")]
        methods: Vec<String>,
        #[arg(long)]
        n_calib: usize,
        #[arg(long)]
        n_test: usize,
        #[arg(long, default_value = "inf")]
        kappa: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Critical labels (names or indices, comma separated)
        #[arg(long, value_delimiter = ',')]
        critical: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        grid_points: usize,
        #[arg(long, default_value_t = 50_000)]
        candidate_cap: usize,
        /// Candidate multiplier search mode
        #[arg(long, value_enum, default_value_t = BetaModeArg::Exact)]
        beta_mode: BetaModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Infeasible(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_utility(path: &Path) -> riskcal::Result<UtilityMatrix> {
    parse_utility(&fs::read_to_string(path)?)
}

fn load_population(path: &Path) -> riskcal::Result<FinitePopulation> {
    parse_population(&fs::read_to_string(path)?)
}

fn load_dataset(path: &Path, matrix: &UtilityMatrix, epsilon: f64) -> riskcal::Result<Dataset> {
    read_dataset(BufReader::new(fs::File::open(path)?), matrix, epsilon)
}

fn load_test_rows(
    path: &Path,
    matrix: &UtilityMatrix,
    epsilon: f64,
) -> riskcal::Result<(Vec<Forecast>, Vec<Option<usize>>)> {
    read_forecast_rows(BufReader::new(fs::File::open(path)?), matrix, epsilon)
}

fn parse_kappa(s: &str) -> riskcal::Result<ForecastNoise> {
    if s.eq_ignore_ascii_case("inf") || s == "∞" {
        return Ok(ForecastNoise::WellSpecified);
    }
    let kappa: f64 = s
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("kappa '{s}' is neither 'inf' nor a number")))?;
    let noise = ForecastNoise::Dirichlet { kappa };
    noise.validate()?;
    Ok(noise)
}

fn parse_critical(matrix: &UtilityMatrix, tokens: &[String]) -> riskcal::Result<CriticalSpec> {
    let mut labels = Vec::with_capacity(tokens.len());
    for t in tokens {
        let t = t.trim();
        if t.is_empty() {
            continue;
        }
        let idx = match matrix.label_index(t) {
            Some(i) => i,
            None => t.parse::<usize>().map_err(|_| {
                Error::InvalidParameter(format!("critical label '{t}' is neither a name nor an index"))
            })?,
        };
        labels.push(idx);
    }
    CriticalSpec::new(matrix, &labels)
}

/// Writes through a closure either to a file or to stdout.
fn write_output<F>(out: Option<&Path>, write: F) -> riskcal::Result<()>
where
    F: FnOnce(&mut dyn Write) -> riskcal::Result<()>,
{
    match out {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            write(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> riskcal::Result<()> {
    write_output(out, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn quantile_summary(mut values: Vec<f64>) -> serde_json::Value {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return serde_json::json!(null);
    }
    serde_json::json!({
        "min": values[0],
        "median": values[n / 2],
        "max": values[n - 1],
    })
}

fn run(command: Command) -> riskcal::Result<()> {
    match command {
        Command::Predict {
            utility,
            calib,
            test,
            epsilon,
            cal,
            split_beta,
            out,
            summary_out,
            dump_menus,
        } => {
            let matrix = load_utility(&utility)?;
            let calib = load_dataset(&calib, &matrix, epsilon)?;
            let (tests, _) = load_test_rows(&test, &matrix, epsilon)?;
            let cfg = cal.config();
            let calibrator = RacCalibrator::new(&matrix, &calib, cfg)?;

            if let Some(path) = &dump_menus {
                let mut w = BufWriter::new(fs::File::create(path)?);
                for f in &tests {
                    write_menu_dump(&mut w, &CoverageMenu::build(&matrix, f)?)?;
                }
                w.flush()?;
            }

            let (decisions, summary) = if split_beta {
                let beta = calibrator.split_beta()?;
                let decisions = tests
                    .iter()
                    .map(|f| riskcal::set_at_beta(&matrix, f, beta))
                    .collect::<riskcal::Result<Vec<_>>>()?;
                let summary = serde_json::json!({
                    "alpha": cfg.alpha,
                    "n": calib.len(),
                    "n_test": tests.len(),
                    "beta_mode": cfg.beta_mode.to_string(),
                    "variant": "split",
                    "epsilon": epsilon,
                    "beta": beta,
                });
                (decisions, summary)
            } else {
                let predictions = calibrator.predict_batch(&tests)?;
                let mut per_label: Vec<Vec<f64>> = vec![Vec::new(); matrix.n_labels()];
                let mut empty_sets = 0usize;
                let mut decisions = Vec::with_capacity(predictions.len());
                for p in predictions {
                    for (y, &b) in p.calibration.betas.iter().enumerate() {
                        per_label[y].push(b);
                    }
                    if p.decision.set.is_empty() {
                        empty_sets += 1;
                    }
                    decisions.push(p.decision);
                }
                let summary = serde_json::json!({
                    "alpha": cfg.alpha,
                    "n": calib.len(),
                    "n_test": tests.len(),
                    "beta_mode": cfg.beta_mode.to_string(),
                    "variant": "full",
                    "epsilon": epsilon,
                    "empty_sets": empty_sets,
                    "per_label_beta": matrix
                        .label_names()
                        .iter()
                        .zip(per_label)
                        .map(|(name, betas)| {
                            serde_json::json!({ "label": name, "beta": quantile_summary(betas) })
                        })
                        .collect::<Vec<_>>(),
                });
                (decisions, summary)
            };

            write_output(out.as_deref(), |w| write_decisions(w, &matrix, &decisions))?;
            match (&summary_out, &out) {
                (Some(path), _) => write_json(Some(path), &summary)?,
                (None, Some(_)) => write_json(None, &summary)?,
                (None, None) => {
                    // decisions already own stdout
                    eprintln!("{}", serde_json::to_string_pretty(&summary)?);
                }
            }
            Ok(())
        }

        Command::Evaluate {
            utility,
            calib,
            test,
            method,
            sets,
            critical,
            epsilon,
            cal,
            out,
            rows_out,
        } => {
            let matrix = load_utility(&utility)?;
            let calib = load_dataset(&calib, &matrix, epsilon)?;
            let (tests, labels) = load_test_rows(&test, &matrix, epsilon)?;
            let truths: Vec<usize> = labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| {
                    l.ok_or_else(|| {
                        Error::InvalidDataset(format!("test row {} needs a label to evaluate", i + 1))
                    })
                })
                .collect::<riskcal::Result<_>>()?;
            let crit = parse_critical(&matrix, &critical)?;
            let cfg = cal.config();

            let (run, name): (MethodRun, String) = if method == "external" {
                let path = sets.ok_or_else(|| {
                    Error::InvalidParameter("--method external requires --sets".into())
                })?;
                let sets = read_external_sets(BufReader::new(fs::File::open(path)?), &matrix)?;
                if sets.len() != tests.len() {
                    return Err(Error::InvalidParameter(format!(
                        "{} external sets for {} test rows",
                        sets.len(),
                        tests.len()
                    )));
                }
                let decisions: Vec<CertifiedDecision> =
                    sets.into_iter().map(|s| decide(&matrix, s)).collect();
                (MethodRun::Decisions(decisions), "external".to_string())
            } else {
                let m = Method::parse(&method)?;
                (harness::run_method(m, &matrix, &calib, &tests, cfg)?, m.name().to_string())
            };

            let config = serde_json::json!({
                "utility": utility.display().to_string(),
                "epsilon": epsilon,
                "n_calib": calib.len(),
                "beta_mode": cfg.beta_mode.to_string(),
            });
            let (report, rows) = harness::evaluate(&matrix, &run, &truths, &crit, &name, cfg.alpha, config)?;
            if let Some(path) = rows_out {
                let mut w = BufWriter::new(fs::File::create(path)?);
                for row in &rows {
                    serde_json::to_writer(&mut w, row)?;
                    writeln!(w)?;
                }
                w.flush()?;
            }
            write_json(out.as_deref(), &serde_json::to_value(&report)?)
        }

        Command::Oracle { utility, population, alpha, refine, jitter, seed, out } => {
            let matrix = load_utility(&utility)?;
            let population = load_population(&population)?;
            let sol = solve_population(&population, &matrix, alpha)?;
            let shift = matrix.shift();

            let per_atom: Vec<serde_json::Value> = sol
                .per_atom
                .iter()
                .map(|a| {
                    serde_json::json!({
                        "coverage": a.coverage,
                        "set": a.decision.set.iter()
                            .map(|y| matrix.label_name(y))
                            .collect::<Vec<_>>(),
                        "action": matrix.action_name(a.decision.action),
                        "value": a.decision.original_value(&matrix),
                    })
                })
                .collect();

            let brute = match brute_force_population(&population, &matrix, alpha) {
                Ok(bf) => Some(bf),
                Err(Error::TooLarge(_)) => None,
                Err(e) => return Err(e),
            };
            let brute_json = brute.as_ref().map(|bf| {
                serde_json::json!({
                    "set_program_opt": bf.set_program_opt - shift,
                    "policy_program_opt": bf.policy_program_opt - shift,
                    "equivalence_gap": bf.equivalence_gap(),
                })
            });
            let sandwich = brute.as_ref().map(|bf| {
                let holds = sol.objective <= bf.set_program_opt + 1e-12
                    && bf.set_program_opt <= sol.dual_bound + 1e-12;
                serde_json::json!({
                    "lower": sol.objective - shift,
                    "exhaustive": bf.set_program_opt - shift,
                    "upper": sol.dual_bound - shift,
                    "holds": holds,
                })
            });

            let refined = if refine > 1 {
                let rpop = population.refined(refine, jitter, seed)?;
                let rsol = solve_population(&rpop, &matrix, alpha)?;
                Some(serde_json::json!({
                    "factor": refine,
                    "jitter": jitter,
                    "seed": seed,
                    "objective": rsol.objective - shift,
                    "dual_bound": rsol.dual_bound - shift,
                    "duality_gap": rsol.duality_gap,
                    "gap_relative_to_u_max": rsol.duality_gap / matrix.u_max(),
                }))
            } else {
                None
            };

            let report = serde_json::json!({
                "alpha": alpha,
                "solution": {
                    "beta_star": sol.beta_star,
                    "objective": sol.objective - shift,
                    "achieved_coverage": sol.achieved_coverage,
                    "coverage_slack": sol.coverage_slack,
                    "dual_bound": sol.dual_bound - shift,
                    "duality_gap": sol.duality_gap,
                    "per_atom": per_atom,
                },
                "brute_force": brute_json,
                "sandwich": sandwich,
                "refined": refined,
            });
            write_json(out.as_deref(), &report)
        }

        Command::McCoverage {
            utility,
            population,
            method,
            trials,
            n_calib,
            kappa,
            seed,
            epsilon,
            cal,
            out,
            rows_out,
        } => {
            let matrix = load_utility(&utility)?;
            let population = load_population(&population)?;
            let noise = parse_kappa(&kappa)?;
            let method = Method::parse(&method)?;
            let cfg = cal.config();
            let setup = McSetup {
                population: &population,
                noise,
                n_calib,
                epsilon,
                seed,
            };
            let cells = coverage_mc(&matrix, &setup, &[cfg.alpha], trials, method, cfg)?;
            let cell = &cells[0];
            if let Some(path) = rows_out {
                let mut w = BufWriter::new(fs::File::create(path)?);
                for r in &cell.records {
                    serde_json::to_writer(&mut w, r)?;
                    writeln!(w)?;
                }
                w.flush()?;
            }
            let report = serde_json::json!({
                "method": cell.method,
                "alpha": cell.alpha,
                "trials": cell.trials,
                "n_calib": n_calib,
                "kappa": kappa,
                "seed": seed,
                "epsilon": epsilon,
                "empirical_coverage": cell.empirical_coverage,
                "stderr": cell.stderr,
                "target": 1.0 - cell.alpha,
            });
            write_json(out.as_deref(), &report)
        }

        Command::SweepAlpha {
            utility,
            population,
            alphas,
            methods,
            n_calib,
            n_test,
            kappa,
            seed,
            epsilon,
            critical,
            grid_points,
            candidate_cap,
            beta_mode,
            out,
        } => {
            let matrix = load_utility(&utility)?;
            let population = load_population(&population)?;
            let noise = parse_kappa(&kappa)?;
            let methods: Vec<Method> =
                methods.iter().map(|m| Method::parse(m)).collect::<riskcal::Result<_>>()?;
            if methods.is_empty() {
                return Err(Error::InvalidParameter("no methods requested".into()));
            }
            let crit = parse_critical(&matrix, &critical)?;
            let spec = SyntheticSpec {
                population,
                noise,
                n_calib,
                n_test,
                seed,
                epsilon,
            };
            let cfg = RacConfig {
                alpha: *alphas.first().unwrap(),
                beta_mode: beta_mode.into(),
                grid_points,
                candidate_cap,
            };
            let reports = sweep_alpha(&matrix, &spec, &alphas, &methods, &crit, cfg)?;
            write_output(out.as_deref(), |w| write_sweep_csv(w, &reports))
        }
    }
}
