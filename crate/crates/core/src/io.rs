//! Plain-text file formats.
//!
//! * Rankings: header `N n`, then one ranking per line as the items listed
//!   from most to least preferred (0-indexed).
//! * Matrices: header `N d`, then `N` rows of `d` space-separated entries;
//!   `NA` marks a missing comparison.
//! * Labels: one integer per line.
//! * Sidecar metadata: `key=value` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::ObservationMatrix;
use crate::rankings::Permutation;

pub const MISSING_TOKEN: &str = "NA";

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// `path` with `suffix` appended to the file name (`out.txt` → `out.txt.meta`).
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn header(lines: &mut dyn Iterator<Item = (usize, &str)>) -> Result<(usize, usize)> {
    let (line_no, line) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header line"))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::parse(line_no, "header must hold two integers"));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::parse(line_no, format!("bad header value `{s}`: {e}")))
    };
    Ok((parse(fields[0])?, parse(fields[1])?))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_rankings(text: &str) -> Result<Vec<Permutation>> {
    let mut lines = content_lines(text);
    let (count, n) = header(&mut lines)?;
    let mut out = Vec::with_capacity(count);
    for (line_no, line) in lines {
        let order = line
            .split_whitespace()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| Error::parse(line_no, format!("bad item `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if order.len() != n {
            return Err(Error::parse(
                line_no,
                format!("expected {n} items, found {}", order.len()),
            ));
        }
        out.push(Permutation::from_order(order).map_err(|e| Error::parse(line_no, e.to_string()))?);
    }
    if out.len() != count {
        return Err(Error::parse(
            0,
            format!("header announces {count} rankings, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub fn format_rankings(rankings: &[Permutation]) -> String {
    let n = rankings.first().map_or(0, Permutation::n);
    let mut out = format!("{} {}\n", rankings.len(), n);
    for p in rankings {
        let line: Vec<String> = p.order().iter().map(ToString::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a matrix file; `NA` cells become `None`.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<Option<f64>>>> {
    let mut lines = content_lines(text);
    let (rows, cols) = header(&mut lines)?;
    let mut out = Vec::with_capacity(rows);
    for (line_no, line) in lines {
        let row = line
            .split_whitespace()
            .map(|tok| {
                if tok == MISSING_TOKEN {
                    Ok(None)
                } else {
                    tok.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::parse(line_no, format!("bad entry `{tok}`: {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != cols {
            return Err(Error::parse(
                line_no,
                format!("expected {cols} entries, found {}", row.len()),
            ));
        }
        out.push(row);
    }
    if out.len() != rows {
        return Err(Error::parse(
            0,
            format!("header announces {rows} rows, found {}", out.len()),
        ));
    }
    Ok(out)
}

/// Parses a matrix file that must not contain missing cells.
pub fn parse_real_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows = parse_matrix(text)?;
    let cols = rows.first().map_or(0, Vec::len);
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = v.ok_or_else(|| {
                Error::parse(i + 2, format!("missing entry in column {j} of a dense matrix"))
            })?;
        }
    }
    Ok(m)
}

pub fn format_observations(obs: &ObservationMatrix) -> String {
    let mut out = format!("{} {}\n", obs.nrows(), obs.ncols());
    for i in 0..obs.nrows() {
        for j in 0..obs.ncols() {
            if j > 0 {
                out.push(' ');
            }
            match obs.entry(i, j) {
                None => out.push_str(MISSING_TOKEN),
                Some(v) if v > 0.0 => out.push_str("0.5"),
                Some(_) => out.push_str("-0.5"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn format_real_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(line_no, l)| {
            l.parse::<usize>()
                .map_err(|e| Error::parse(line_no, format!("bad label `{l}`: {e}")))
        })
        .collect()
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    out
}

pub fn format_meta(entries: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

pub fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}
