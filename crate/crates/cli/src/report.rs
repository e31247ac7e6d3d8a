//! Report types and their CSV and JSON renderings.
//!
//! Transform tables share one CSV layout:
//! `point,state,analytic_re,analytic_im,sim_mean,sim_se,z_score`, with empty
//! cells for quantities a command does not produce. Floats are written in
//! shortest round-trip form, so reports re-parse to identical values.

use std::fmt::Write as _;
use std::path::Path;

use modlindley::mcsim::Stat;
use modlindley::models::ModelKind;
use modlindley::{Warning, C64};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::{CliError, Format};

pub const CSV_HEADER: &str = "point,state,analytic_re,analytic_im,sim_mean,sim_se,z_score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub point: f64,
    pub state: usize,
    pub analytic_re: Option<f64>,
    pub analytic_im: Option<f64>,
    pub sim_mean: Option<f64>,
    pub sim_se: Option<f64>,
    pub z_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValues {
    pub name: String,
    pub values: Vec<C64>,
}

/// A per-point diagnostic; `None` where it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub point: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorCheck {
    pub point: f64,
    pub max_error: f64,
    pub bound: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMoments {
    pub state: usize,
    pub first: Option<f64>,
    pub second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Functional-equation residual at each grid point.
    pub residuals: Vec<PointValue>,
    pub max_residual: f64,
    /// Residual of the constraint system fixing the unknowns.
    pub constraint_residual: f64,
    pub condition: f64,
    /// Norm of the last retained series layer at each grid point.
    pub tail_norms: Vec<PointValue>,
    pub spectra: Vec<NamedValues>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub kind: ModelKind,
    pub tol: f64,
    pub max_order: usize,
    pub perturbation: Option<f64>,
    pub rows: Vec<Row>,
    pub anchor: AnchorCheck,
    pub unknowns: Vec<NamedValues>,
    pub boundary_atoms: Option<Vec<f64>>,
    pub moments: Vec<StateMoments>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub kind: ModelKind,
    pub replications: usize,
    pub steps: usize,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub state_frequency: Vec<Stat>,
    pub atoms: Vec<Stat>,
    pub first_moment: Vec<Stat>,
    pub second_moment: Vec<Stat>,
    pub drift: Option<Stat>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub cells: usize,
    pub max_abs_z: f64,
    pub cells_above_3: usize,
    pub z_bound: f64,
    pub max_residual: f64,
    pub residual_bound: f64,
    /// Largest difference to the `[reference]` model's analytic transform.
    pub reference_max_diff: Option<f64>,
    pub reference_bound: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRow {
    pub state: usize,
    pub analytic: f64,
    pub sim: Stat,
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub kind: ModelKind,
    pub replications: usize,
    pub seed: u64,
    pub perturbation: Option<f64>,
    pub rows: Vec<Row>,
    pub atoms: Vec<AtomRow>,
    pub summary: CompareSummary,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEntry {
    pub quantity: String,
    pub index: usize,
    pub value: C64,
    pub left_vector: Option<Vec<C64>>,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub kind: ModelKind,
    pub entries: Vec<SpectralEntry>,
    pub ok: bool,
    /// Set when the model could not be assembled from these spectra.
    pub build_error: Option<String>,
}

pub trait Report: Serialize + DeserializeOwned {
    fn to_csv(&self) -> String;

    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    /// Write to `path`, or to stdout when there is none.
    fn emit(&self, format: Format, path: Option<&Path>) -> Result<(), CliError> {
        let text = self.render(format);
        match path {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Shortest round-trip form, in exponent notation away from unit scale.
fn number(x: f64) -> String {
    if x != 0.0 && !(1e-4..1e15).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            number(r.point),
            r.state,
            cell(r.analytic_re),
            cell(r.analytic_im),
            cell(r.sim_mean),
            cell(r.sim_se),
            cell(r.z_score)
        );
    }
    out
}

/// Parse a transform table written by [`rows_to_csv`].
pub fn rows_from_csv(text: &str) -> Result<Vec<Row>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::Config("missing or unexpected CSV header".into()));
    }
    let bad = |line: &str| CliError::Config(format!("malformed CSV row {line:?}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(line));
            }
            let opt = |s: &str| -> Result<Option<f64>, CliError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(line))
                }
            };
            Ok(Row {
                point: f[0].parse().map_err(|_| bad(line))?,
                state: f[1].parse().map_err(|_| bad(line))?,
                analytic_re: opt(f[2])?,
                analytic_im: opt(f[3])?,
                sim_mean: opt(f[4])?,
                sim_se: opt(f[5])?,
                z_score: opt(f[6])?,
            })
        })
        .collect()
}

impl Report for SolveReport {
    fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

impl Report for SimulateReport {
    fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

impl Report for CompareReport {
    fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

impl Report for DiagnoseReport {
    fn to_csv(&self) -> String {
        let mut out = String::from("quantity,index,re,im,verdict\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.quantity,
                e.index,
                number(e.value.re),
                number(e.value.im),
                e.verdict
            );
        }
        out
    }
}
