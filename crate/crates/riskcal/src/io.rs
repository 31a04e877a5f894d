//! File formats: utility JSON, forecast JSONL, population JSON, decision
//! JSONL, report JSON, and the sweep CSV.
//!
//! All floats are 64-bit and serialize with shortest round-trip decimals.
//! The utility file is action-major (`utilities[action][label]`); note that
//! printed tables in reports elsewhere often put true labels on rows, so
//! the loader is explicit about this transposition. Utility serialization
//! emits the entries exactly as loaded, so load -> save round-trips
//! bit-exactly even when the working table was shifted internally.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::decision::{CertifiedDecision, PredictionSet};
use crate::error::{Error, Result};
use crate::harness::Report;
use crate::menu::CoverageMenu;
use crate::model::{Dataset, Forecast, LabeledSample, UtilityMatrix};
use crate::oracle::{Atom, FinitePopulation};

#[derive(Serialize, Deserialize)]
struct UtilityFile {
    actions: Vec<String>,
    labels: Vec<String>,
    /// Row per action, column per label.
    utilities: Vec<Vec<f64>>,
}

pub fn parse_utility(text: &str) -> Result<UtilityMatrix> {
    let file: UtilityFile = serde_json::from_str(text)?;
    UtilityMatrix::new(file.actions, file.labels, file.utilities)
}

pub fn utility_to_json(matrix: &UtilityMatrix) -> String {
    let file = UtilityFile {
        actions: matrix.action_names().to_vec(),
        labels: matrix.label_names().to_vec(),
        utilities: matrix.original_table().to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("utility file serializes")
}

#[derive(Deserialize)]
struct DataRow {
    p: Vec<f64>,
    #[serde(default)]
    y: Option<serde_json::Value>,
}

fn resolve_label(matrix: &UtilityMatrix, value: &serde_json::Value, line: usize) -> Result<usize> {
    match value {
        serde_json::Value::String(name) => matrix.label_index(name).ok_or_else(|| {
            Error::InvalidDataset(format!("line {line}: unknown label name '{name}'"))
        }),
        serde_json::Value::Number(n) => {
            let idx = n.as_u64().ok_or_else(|| {
                Error::InvalidDataset(format!("line {line}: label index {n} is not a valid index"))
            })? as usize;
            if idx >= matrix.n_labels() {
                return Err(Error::InvalidDataset(format!(
                    "line {line}: label index {idx} out of range ({} labels)",
                    matrix.n_labels()
                )));
            }
            Ok(idx)
        }
        other => Err(Error::InvalidDataset(format!(
            "line {line}: label must be a name or index, got {other}"
        ))),
    }
}

/// Reads forecast rows, smoothing each with `epsilon`. Labels are optional
/// per row (test files may omit them).
pub fn read_forecast_rows<R: BufRead>(
    reader: R,
    matrix: &UtilityMatrix,
    epsilon: f64,
) -> Result<(Vec<Forecast>, Vec<Option<usize>>)> {
    let mut forecasts = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: DataRow = serde_json::from_str(trimmed)?;
        if row.p.len() != matrix.n_labels() {
            return Err(Error::InvalidDataset(format!(
                "line {}: forecast has {} entries for {} labels",
                i + 1,
                row.p.len(),
                matrix.n_labels()
            )));
        }
        forecasts.push(Forecast::smoothed(&row.p, epsilon)?);
        labels.push(match &row.y {
            Some(v) => Some(resolve_label(matrix, v, i + 1)?),
            None => None,
        });
    }
    Ok((forecasts, labels))
}

/// Reads a fully labeled dataset (calibration data).
pub fn read_dataset<R: BufRead>(
    reader: R,
    matrix: &UtilityMatrix,
    epsilon: f64,
) -> Result<Dataset> {
    let (forecasts, labels) = read_forecast_rows(reader, matrix, epsilon)?;
    let samples = forecasts
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (forecast, label))| {
            let label = label.ok_or_else(|| {
                Error::InvalidDataset(format!("line {}: calibration rows need labels", i + 1))
            })?;
            Ok(LabeledSample { forecast, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, matrix.n_labels())
}

#[derive(Deserialize)]
struct PopulationFile {
    atoms: Vec<PopulationAtom>,
}

#[derive(Deserialize)]
struct PopulationAtom {
    w: f64,
    q: Vec<f64>,
}

pub fn parse_population(text: &str) -> Result<FinitePopulation> {
    let file: PopulationFile = serde_json::from_str(text)?;
    let atoms = file
        .atoms
        .into_iter()
        .map(|a| Ok(Atom { weight: a.w, conditional: Forecast::new(a.q)? }))
        .collect::<Result<Vec<_>>>()?;
    FinitePopulation::new(atoms)
}

/// One emitted prediction-set record.
#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub set: Vec<String>,
    pub action: String,
    pub certificate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub empty_set: Option<bool>,
}

impl DecisionRecord {
    pub fn new(matrix: &UtilityMatrix, decision: &CertifiedDecision) -> Self {
        Self {
            set: decision.set.iter().map(|y| matrix.label_name(y).to_string()).collect(),
            action: matrix.action_name(decision.action).to_string(),
            certificate: decision.original_value(matrix),
            empty_set: decision.set.is_empty().then_some(true),
        }
    }
}

pub fn write_decisions<W: Write>(
    mut w: W,
    matrix: &UtilityMatrix,
    decisions: &[CertifiedDecision],
) -> Result<()> {
    for d in decisions {
        serde_json::to_writer(&mut w, &DecisionRecord::new(matrix, d))?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct ExternalSetRow {
    set: Vec<serde_json::Value>,
}

/// Reads externally produced prediction sets, one JSONL row per test row.
pub fn read_external_sets<R: BufRead>(
    reader: R,
    matrix: &UtilityMatrix,
) -> Result<Vec<PredictionSet>> {
    let mut sets = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: ExternalSetRow = serde_json::from_str(trimmed)?;
        let members = row
            .set
            .iter()
            .map(|v| resolve_label(matrix, v, i + 1))
            .collect::<Result<Vec<_>>>()?;
        sets.push(PredictionSet::from_members(matrix.n_labels(), members));
    }
    Ok(sets)
}

/// CSV column order is pinned; absent metrics serialize as empty cells.
pub const SWEEP_CSV_HEADER: &str =
    "alpha,method,avg_maxmin_value,critical_mistake_rate,avg_realized_utility,miscoverage";

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(mut w: W, reports: &[Report]) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.alpha,
            r.method,
            csv_opt(r.avg_maxmin_value),
            csv_opt(r.critical_mistake_rate),
            r.avg_realized_utility,
            csv_opt(r.miscoverage),
        )?;
    }
    Ok(())
}

/// Debug dump: one `{"s":..,"v":..,"a":..}` line per frontier entry.
pub fn write_menu_dump<W: Write>(mut w: W, menu: &CoverageMenu) -> Result<()> {
    for e in menu.entries() {
        serde_json::to_writer(
            &mut w,
            &serde_json::json!({ "s": e.coverage, "v": e.value, "a": e.action }),
        )?;
        writeln!(w)?;
    }
    Ok(())
}
