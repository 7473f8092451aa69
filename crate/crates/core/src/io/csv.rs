//! Plain-text CSV for matrices and solver metrics.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::telemetry::IterationRecord;

pub const METRICS_HEADER: &str = "iter,feasibility_gap,objective,rank_l,sparsity_s,wall_seconds";

/// One line per row, shortest round-trip decimal for each entry.
pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m[(i, j)]).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| parse_f64(f, lineno))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format("no rows"));
    }
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    DenseMatrix::from_rows(&refs).map_err(|e| Error::format(e.to_string()))
}

fn parse_f64(field: &str, lineno: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::format(format!("line {}: cannot parse {field:?}", lineno + 1)))
}

/// Header plus one row per record; floats carry 17 significant digits.
pub fn metrics_to_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in history {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            r.iter, r.feasibility_gap, r.objective, r.rank_l, r.sparsity_s, r.wall_seconds
        )
        .expect("writing to a String");
    }
    out
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::format(format!("missing header {METRICS_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::format(format!(
                "line {}: {} fields, expected 6",
                lineno + 1,
                f.len()
            )));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::format(format!("line {}: cannot parse {s:?}", lineno + 1)))
        };
        out.push(IterationRecord {
            iter: int(f[0])?,
            feasibility_gap: parse_f64(f[1], lineno)?,
            objective: parse_f64(f[2], lineno)?,
            rank_l: int(f[3])?,
            sparsity_s: parse_f64(f[4], lineno)?,
            wall_seconds: parse_f64(f[5], lineno)?,
        });
    }
    Ok(out)
}

pub fn write_metrics(history: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    super::write_file(path.as_ref(), metrics_to_csv(history).as_bytes())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    let bytes = super::read_file(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format("metrics file is not UTF-8"))?;
    metrics_from_csv(&text)
}
