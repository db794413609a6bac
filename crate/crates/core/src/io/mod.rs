//! Dataset exchange and report emission.

mod csv;
mod report;

pub use self::csv::{emit_dataset_csv, ingest_csv, read_dataset, write_dataset};
pub use report::{emit_report, fmt_f64, render_report, Cell, Report, ReportFormat, Table};
