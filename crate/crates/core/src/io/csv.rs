//! Long-format CSV datasets.
//!
//! One row per alternative:
//!
//! ```text
//! task_id,alt,x_1,...,x_d,y,z      (primary)
//! task_id,alt,x_1,...,x_d,z        (auxiliary)
//! ```
//!
//! Rows of a task are contiguous with `alt = 1..k`. Labels sit on the `alt = 1`
//! row; other rows leave them empty or repeat the same value.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::choice::{ChoiceTask, Dataset, DatasetKind};
use crate::error::{Error, Result};

fn header_for(kind: DatasetKind, d: usize) -> Vec<String> {
    let mut h = vec!["task_id".to_string(), "alt".to_string()];
    h.extend((1..=d).map(|c| format!("x_{c}")));
    if kind == DatasetKind::Primary {
        h.push("y".into());
    }
    h.push("z".into());
    h
}

/// Number of attributes declared by a header, after checking its layout.
fn parse_header(header: &csv::StringRecord, kind: DatasetKind) -> Result<usize> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let has_y = cols.contains(&"y");
    if kind == DatasetKind::Auxiliary && has_y {
        return Err(Error::invalid("auxiliary data must not contain a y column"));
    }
    if kind == DatasetKind::Primary && !has_y {
        return Err(Error::invalid("primary data needs a y column"));
    }
    let labels = if has_y { 2 } else { 1 };
    if cols.len() < 3 + labels {
        return Err(Error::invalid(format!("header has too few columns: {cols:?}")));
    }
    let d = cols.len() - 2 - labels;
    let want = header_for(kind, d);
    if cols != want.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::invalid(format!("malformed header {cols:?}; expected {want:?}")));
    }
    Ok(d)
}

fn parse_label(field: &str, line: u64, name: &str) -> Result<Option<usize>> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    f.parse::<usize>()
        .map(Some)
        .map_err(|_| Error::invalid(format!("line {line}: {name} label {f:?} is not a non-negative integer")))
}

struct Pending {
    id: String,
    rows: Vec<Vec<f64>>,
    y: Option<usize>,
    z: Option<usize>,
    line: u64,
}

/// Parses a dataset of the given kind from CSV text.
pub fn read_dataset<R: Read>(reader: R, kind: DatasetKind) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let d = parse_header(rdr.headers()?, kind)?;
    let y_col = (kind == DatasetKind::Primary).then_some(2 + d);
    let z_col = 2 + d + usize::from(y_col.is_some());
    let mut tasks: Vec<ChoiceTask> = Vec::new();
    let mut k: Option<usize> = None;
    let mut current: Option<Pending> = None;
    let mut seen_ids = std::collections::HashSet::new();

    let finish = |p: Pending, k: &mut Option<usize>, tasks: &mut Vec<ChoiceTask>| -> Result<()> {
        let kk = p.rows.len();
        match *k {
            None => *k = Some(kk),
            Some(existing) if existing != kk => {
                return Err(Error::invalid(format!(
                    "task {:?} (line {}) has {kk} alternatives, earlier tasks have {existing}",
                    p.id, p.line
                )))
            }
            _ => {}
        }
        let data: Vec<f64> = p.rows.into_iter().flatten().collect();
        let task = ChoiceTask::new(DMatrix::from_row_slice(kk, d, &data), p.y, p.z)
            .map_err(|e| Error::invalid(format!("task {:?} (line {}): {e}", p.id, p.line)))?;
        tasks.push(task);
        Ok(())
    };

    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != z_col + 1 {
            return Err(Error::invalid(format!("line {line}: expected {} fields, got {}", z_col + 1, rec.len())));
        }
        let id = rec[0].trim().to_string();
        let alt: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("line {line}: alt {:?} is not a positive integer", &rec[1])))?;
        let x: Vec<f64> = (0..d)
            .map(|c| {
                let f = rec[2 + c].trim();
                match f.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::invalid(format!("line {line}: attribute x_{} = {f:?} is not a finite number", c + 1))),
                }
            })
            .collect::<Result<_>>()?;
        let y = match y_col {
            Some(c) => parse_label(&rec[c], line, "y")?,
            None => None,
        };
        let z = parse_label(&rec[z_col], line, "z")?;

        if current.as_ref().map_or(true, |p| p.id != id) {
            if let Some(p) = current.take() {
                finish(p, &mut k, &mut tasks)?;
            }
            if !seen_ids.insert(id.clone()) {
                return Err(Error::invalid(format!("line {line}: rows of task {id:?} are not contiguous")));
            }
            if alt != 1 {
                return Err(Error::invalid(format!("line {line}: task {id:?} must start at alt 1, got {alt}")));
            }
            if z.is_none() {
                return Err(Error::MissingLabel(format!("line {line}: task {id:?} has no z on its alt 1 row")));
            }
            if y_col.is_some() && y.is_none() {
                return Err(Error::MissingLabel(format!("line {line}: task {id:?} has no y on its alt 1 row")));
            }
            current = Some(Pending {
                id,
                rows: vec![x],
                y,
                z,
                line,
            });
        } else {
            let p = current.as_mut().expect("current task");
            if alt != p.rows.len() + 1 {
                return Err(Error::invalid(format!(
                    "line {line}: task {id:?} expected alt {}, got {alt}",
                    p.rows.len() + 1
                )));
            }
            if (y.is_some() && y != p.y) || (z.is_some() && z != p.z) {
                return Err(Error::invalid(format!("line {line}: task {id:?} has conflicting labels")));
            }
            p.rows.push(x);
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut k, &mut tasks)?;
    }
    if tasks.is_empty() {
        return Err(Error::invalid("dataset has no rows"));
    }
    Dataset::new(kind, tasks)
}

pub fn ingest_csv(path: impl AsRef<Path>, kind: DatasetKind) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?), kind)
}

/// Writes a dataset in the long format. Attributes use the shortest
/// representation that parses back to the same value.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header_for(data.kind(), data.d()))?;
    let label = |v: Option<usize>| v.map(|l| l.to_string()).unwrap_or_default();
    for (i, t) in data.tasks().iter().enumerate() {
        for j in 1..=t.k() {
            let mut rec = vec![(i + 1).to_string(), j.to_string()];
            rec.extend((0..t.d()).map(|c| format!("{}", t.x(j, c))));
            let first = j == 1;
            if data.kind() == DatasetKind::Primary {
                rec.push(if first { label(t.human_label()) } else { String::new() });
            }
            rec.push(if first { label(t.ai_label()) } else { String::new() });
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_dataset_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    write_dataset(f, data)
}
