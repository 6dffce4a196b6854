use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Format, RunSettings};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => format!("{x:e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len(), "table {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    pub measured: String,
    pub expected: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub assertions: Vec<Assertion>,
    /// Structured results (certificates, EP reports, calibration).
    pub data: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tables: Vec<Table>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub table_files: Vec<String>,
}

impl Report {
    pub fn new(scenario: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed,
            assertions: Vec::new(),
            data: serde_json::Map::new(),
            tables: Vec::new(),
            table_files: Vec::new(),
        }
    }

    /// `measured ≤ limit`.
    pub fn at_most(&mut self, name: &str, measured: f64, limit: f64) {
        self.check(name, measured <= limit, format!("{measured:e}"), format!("<= {limit:e}"));
    }

    /// `|measured − expected| ≤ tol`.
    pub fn near(&mut self, name: &str, measured: f64, expected: f64, tol: f64) {
        self.check(
            name,
            (measured - expected).abs() <= tol,
            format!("{measured}"),
            format!("{expected} ± {tol:e}"),
        );
    }

    pub fn is_true(&mut self, name: &str, value: bool) {
        self.check(name, value, value.to_string(), "true".into());
    }

    pub fn check(&mut self, name: &str, pass: bool, measured: String, expected: String) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            measured,
            expected,
            pass,
        });
    }

    pub fn data(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.data.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn lines(&self) -> Vec<String> {
        self.assertions
            .iter()
            .map(|a| {
                format!(
                    "{} {}: measured {}, expected {}",
                    if a.pass { "PASS" } else { "FAIL" },
                    a.name,
                    a.measured,
                    a.expected
                )
            })
            .collect()
    }
}

fn write_csv(path: &Path, t: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(&t.headers)?;
    for row in &t.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the primary outputs and the sidecar log; returns the written paths.
pub fn write(settings: &RunSettings, mut report: Report, argv: &[String]) -> Result<(Vec<PathBuf>, Report)> {
    fs::create_dir_all(&settings.out).with_context(|| format!("creating {}", settings.out.display()))?;
    let stem = report.scenario.clone();
    let mut written = Vec::new();
    if settings.format == Format::Csv {
        for t in &report.tables {
            let name = format!("{stem}_{}.csv", t.name);
            let path = settings.out.join(&name);
            write_csv(&path, t)?;
            written.push(path);
            report.table_files.push(name);
        }
        report.tables.clear();
    }
    let json = settings.out.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&report)? + "\n")?;
    written.push(json);

    let log = settings.out.join(format!("{stem}.log"));
    let mut f = fs::File::create(&log)?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    writeln!(f, "unix_time {now}")?;
    writeln!(f, "argv {}", argv.join(" "))?;
    for p in &written {
        writeln!(f, "wrote {}", p.display())?;
    }
    for line in report.lines() {
        writeln!(f, "{line}")?;
    }
    writeln!(f, "{}", if report.passed() { "ALL PASS" } else { "FAILED" })?;
    Ok((written, report))
}
