//! Report structure and on-disk emission (JSON, CSV tables, gnuplot script).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SCHEMA: u32 = 1;

/// Where a reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    ClosedForm,
    PhaseTypeOracle,
    MonteCarloOracle,
}

/// How `value` is compared with `reference`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `|value - reference| <= tolerance`.
    Within,
    /// `value <= reference + tolerance`.
    AtMost,
    /// `value >= reference - tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: f64,
    pub source: ReferenceSource,
    pub rule: Rule,
    pub tolerance: f64,
    pub pass: bool,
}

impl Comparison {
    pub fn new(value: f64, reference: f64, source: ReferenceSource, rule: Rule, tolerance: f64) -> Self {
        let pass = check(rule, value, reference, tolerance);
        Self {
            reference,
            source,
            rule,
            tolerance,
            pass,
        }
    }
}

/// The pass rule, kept separate so stored flags can be recomputed.
pub fn check(rule: Rule, value: f64, reference: f64, tolerance: f64) -> bool {
    match rule {
        Rule::Within => (value - reference).abs() <= tolerance,
        Rule::AtMost => value <= reference + tolerance,
        Rule::AtLeast => value >= reference - tolerance,
    }
}

/// One estimator at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimator: String,
    pub n: Option<usize>,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub replicates: u64,
    pub comparison: Option<Comparison>,
    pub error: Option<String>,
    pub notes: Vec<String>,
}

impl EstimatorResult {
    pub fn new(estimator: impl Into<String>, n: Option<usize>) -> Self {
        Self {
            estimator: estimator.into(),
            n,
            value: None,
            stderr: None,
            replicates: 0,
            comparison: None,
            error: None,
            notes: Vec::new(),
        }
    }

    pub fn failed(estimator: impl Into<String>, n: Option<usize>, error: impl ToString) -> Self {
        Self {
            error: Some(error.to_string()),
            ..Self::new(estimator, n)
        }
    }

    pub fn value(mut self, value: f64, stderr: Option<f64>, replicates: u64) -> Self {
        self.value = Some(value);
        self.stderr = stderr.filter(|s| s.is_finite());
        self.replicates = replicates;
        self
    }

    pub fn compare(mut self, reference: f64, source: ReferenceSource, rule: Rule, tolerance: f64) -> Self {
        let v = self.value.expect("compare needs a value");
        self.comparison = Some(Comparison::new(v, reference, source, rule, tolerance));
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn passed(&self) -> Option<bool> {
        self.comparison.as_ref().map(|c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_cell(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

/// Deterministic report body: depends only on the config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub results: Vec<EstimatorResult>,
    pub tables: Vec<Table>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.passed() != Some(false))
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Timing kept out of the report body so the body stays byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub wall_seconds: f64,
    pub threads: usize,
    /// Per estimator section, in run order.
    pub sections: Vec<SectionTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTiming {
    pub name: String,
    pub seconds: f64,
    pub replicates: u64,
    pub replicates_per_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Gnuplot,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "gnuplot" => Ok(Format::Gnuplot),
            other => Err(format!("unknown format `{other}` (json, csv, gnuplot)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct EmitError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn write(path: PathBuf, body: &[u8]) -> Result<PathBuf, EmitError> {
    fs::write(&path, body).map_err(|source| EmitError {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Writes the requested formats into `dir`; returns the files written.
pub fn emit_report(
    report: &ExperimentReport,
    metrics: Option<&Metrics>,
    dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir).map_err(|source| EmitError {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    if formats.contains(&Format::Json) {
        written.push(write(dir.join("report.json"), to_json(report).as_bytes())?);
        if let Some(m) = metrics {
            written.push(write(dir.join("metrics.json"), to_json(m).as_bytes())?);
        }
    }
    if formats.contains(&Format::Csv) {
        for t in &report.tables {
            written.push(write(dir.join(format!("{}.csv", t.name)), t.to_csv().as_bytes())?);
        }
    }
    if formats.contains(&Format::Gnuplot) {
        written.push(write(dir.join("plots.gp"), gnuplot_script(report).as_bytes())?);
    }
    Ok(written)
}

/// Plots every cluster table (empirical with error bars against theory) and
/// the extremal-index convergence table, reading the CSVs next to the script.
pub fn gnuplot_script(report: &ExperimentReport) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset terminal pngcairo size 900,600\nset key top right\nset grid\n",
    );
    for t in &report.tables {
        if t.name.starts_with("clusters_") {
            s.push_str(&format!(
                "\nset output '{name}.png'\nset title 'cluster size law ({name})'\n\
                 set xlabel 'j'\nset ylabel 'pi(j)'\nset logscale y\n\
                 plot '{name}.csv' skip 1 using 1:2:3 with yerrorbars title 'empirical', \\\n     \
                 '{name}.csv' skip 1 using 1:4 with linespoints title 'theory'\nunset logscale y\n",
                name = t.name
            ));
        }
    }
    if report.table("theta_convergence").is_some() {
        s.push_str(
            "\nset output 'theta_convergence.png'\nset title 'extremal index vs n'\n\
             set xlabel 'n'\nset ylabel 'theta'\nset logscale x\n\
             plot 'theta_convergence.csv' skip 1 using 1:2:3 with yerrorbars title 'estimate', \\\n     \
             'theta_convergence.csv' skip 1 using 1:4 with lines title 'theory'\nunset logscale x\n",
        );
    }
    s
}
