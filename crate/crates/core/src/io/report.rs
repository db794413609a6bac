//! Deterministic report files.
//!
//! JSON reports wrap the payload as `{"kind", "seed", "payload"}`; struct
//! fields keep declaration order and every float is written with 17
//! significant digits. CSV reports are long-format tables.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::EstimatorResult;
use crate::inference::AsymptoticReport;
use crate::metrics::{MetricsReport, SavingsResult};
use crate::simlab::{BenchmarkResult, SavingsStudy, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::invalid(format!("unknown format {other:?}"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// A payload that can be written as JSON or as a CSV table.
pub trait Report: Serialize {
    fn kind(&self) -> &'static str;
    fn table(&self) -> Table;
}

/// 17 significant digits; non-finite values spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    kind: &'a str,
    seed: Option<u64>,
    payload: &'a T,
}

/// Serializes `report` into bytes in the requested format.
pub fn render_report<R: Report>(report: &R, seed: Option<u64>, format: ReportFormat) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        ReportFormat::Json => {
            let env = Envelope {
                kind: report.kind(),
                seed,
                payload: report,
            };
            let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
            env.serialize(&mut ser)?;
            out.push(b'\n');
        }
        ReportFormat::Csv => {
            let table = report.table();
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&table.header)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
    }
    Ok(out)
}

pub fn emit_report<R: Report>(report: &R, seed: Option<u64>, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let bytes = render_report(report, seed, format)?;
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

fn matrix_rows(name: &'static str, m: &nalgebra::DMatrix<f64>, rows: &mut Vec<Vec<Cell>>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            rows.push(vec![name.into(), r.into(), c.into(), m[(r, c)].into()]);
        }
    }
}

impl Report for AsymptoticReport {
    fn kind(&self) -> &'static str {
        "asymptotics"
    }

    fn table(&self) -> Table {
        let mut rows = Vec::new();
        matrix_rows("omega_hat", &self.omega_hat, &mut rows);
        matrix_rows("gamma_hat", &self.gamma_hat, &mut rows);
        matrix_rows("lambda_hat", &self.lambda_hat, &mut rows);
        matrix_rows("j_hat", &self.j_hat, &mut rows);
        matrix_rows("j_check_hat", &self.j_check_hat, &mut rows);
        matrix_rows("var_aae", &self.var_aae, &mut rows);
        matrix_rows("var_primary", &self.var_primary, &mut rows);
        for (i, e) in self.dominance_eigs.iter().enumerate() {
            rows.push(vec!["dominance_eigs".into(), i.into(), 0usize.into(), (*e).into()]);
        }
        rows.push(vec!["rho".into(), 0usize.into(), 0usize.into(), self.rho.into()]);
        Table {
            header: vec!["matrix", "row", "col", "value"],
            rows,
        }
    }
}

impl Report for EstimatorResult {
    fn kind(&self) -> &'static str {
        "fit"
    }

    fn table(&self) -> Table {
        let rows = self
            .beta_hat
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, b)| vec![self.kind.name().into(), (i + 1).into(), (*b).into()])
            .collect();
        Table {
            header: vec!["estimator", "coefficient", "value"],
            rows,
        }
    }
}

impl Report for MetricsReport {
    fn kind(&self) -> &'static str {
        "metrics"
    }

    fn table(&self) -> Table {
        let mut rows: Vec<Vec<Cell>> = self
            .percentage_errors
            .iter()
            .enumerate()
            .map(|(i, e)| vec!["ape".into(), (i + 1).into(), (*e).into()])
            .collect();
        rows.push(vec!["mape".into(), 0usize.into(), self.mape.into()]);
        rows.push(vec!["mse".into(), 0usize.into(), self.mse.into()]);
        rows.push(vec!["epsilon".into(), 0usize.into(), self.epsilon.into()]);
        for (i, s) in self.savings.iter().enumerate() {
            rows.push(vec!["savings_percent".into(), (i + 1).into(), s.percent.into()]);
        }
        Table {
            header: vec!["metric", "index", "value"],
            rows,
        }
    }
}

impl Report for SavingsResult {
    fn kind(&self) -> &'static str {
        "savings"
    }

    fn table(&self) -> Table {
        Table {
            header: vec!["n1", "n2", "percent", "extrapolated"],
            rows: vec![vec![self.n1.into(), self.n2.into(), self.percent.into(), self.extrapolated.into()]],
        }
    }
}

impl Report for SweepResult {
    fn kind(&self) -> &'static str {
        "eta_sweep"
    }

    fn table(&self) -> Table {
        Table {
            header: vec!["eta", "instance", "min_eig", "abs_prob_diff"],
            rows: self
                .rows
                .iter()
                .map(|r| vec![r.eta.into(), r.instance.into(), r.min_eig.into(), r.abs_prob_diff.into()])
                .collect(),
        }
    }
}

impl Report for BenchmarkResult {
    fn kind(&self) -> &'static str {
        "benchmark"
    }

    fn table(&self) -> Table {
        Table {
            header: vec![
                "estimator", "m", "n", "successes", "failures", "mape_mean", "mape_sd", "mse_mean", "mse_sd",
                "l2_mean", "l2_sd", "l2_median",
            ],
            rows: self
                .summaries
                .iter()
                .map(|s| {
                    vec![
                        s.estimator.name().into(),
                        self.m.into(),
                        self.n.into(),
                        s.successes.into(),
                        s.failures.into(),
                        s.mape_mean.into(),
                        s.mape_sd.into(),
                        s.mse_mean.into(),
                        s.mse_sd.into(),
                        s.l2_mean.into(),
                        s.l2_sd.into(),
                        s.l2_median.into(),
                    ]
                })
                .collect(),
        }
    }
}

impl Report for SavingsStudy {
    fn kind(&self) -> &'static str {
        "savings_study"
    }

    fn table(&self) -> Table {
        Table {
            header: vec!["m", "n", "aae_mape", "n2", "percent", "extrapolated"],
            rows: self
                .entries
                .iter()
                .map(|e| {
                    vec![
                        e.m.into(),
                        self.n.into(),
                        e.aae_mape.into(),
                        e.savings.n2.into(),
                        e.savings.percent.into(),
                        e.savings.extrapolated.into(),
                    ]
                })
                .collect(),
        }
    }
}
