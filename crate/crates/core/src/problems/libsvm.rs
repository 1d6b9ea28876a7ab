//! Reader for the LIBSVM / svmlight text format:
//!
//! ```text
//! <label> <index>:<value> <index>:<value> ...
//! ```
//!
//! Indices are 1-based and strictly ascending within a line. Blank lines are
//! skipped; any other malformed line is reported with its 1-based line number.

use std::io::BufRead;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseDataset {
    /// Per row, `(column, value)` pairs with 0-based ascending columns.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<f64>,
    /// Largest 1-based index seen.
    pub n_features: usize,
}

impl SparseDataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut dense = vec![0.0; self.n_features];
                for &(c, v) in r {
                    dense[c] = v;
                }
                dense
            })
            .collect()
    }
}

fn parse_number(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} `{tok}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite {what} `{tok}`"),
        });
    }
    Ok(v)
}

fn parse_line(text: &str, line: usize) -> Result<(f64, Vec<(usize, f64)>)> {
    let mut tokens = text.split_whitespace();
    let label = parse_number(tokens.next().unwrap_or_default(), line, "label")?;
    let mut row = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `index:value`, got `{tok}`"),
        })?;
        let idx: usize = idx.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid feature index `{idx}`"),
        })?;
        if idx == 0 {
            return Err(Error::Parse {
                line,
                msg: "feature indices are 1-based, got 0".into(),
            });
        }
        if idx <= last {
            return Err(Error::Parse {
                line,
                msg: format!("feature index {idx} is not greater than previous index {last}"),
            });
        }
        let val = parse_number(val, line, "feature value")?;
        row.push((idx - 1, val));
        last = idx;
    }
    Ok((label, row))
}

pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<SparseDataset> {
    let mut data = SparseDataset::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, row) = parse_line(&line, i + 1)?;
        if let Some(&(c, _)) = row.last() {
            data.n_features = data.n_features.max(c + 1);
        }
        data.labels.push(label);
        data.rows.push(row);
    }
    Ok(data)
}

pub fn parse_libsvm_str(text: &str) -> Result<SparseDataset> {
    parse_libsvm(text.as_bytes())
}

/// Maps a two-class label alphabet onto `{-1, +1}`: `{-1, 1}` is kept, and
/// otherwise label `1` becomes `+1` and the other class `-1`.
pub fn binary_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let mut classes: Vec<f64> = Vec::new();
    for &y in raw {
        if !classes.contains(&y) {
            classes.push(y);
        }
    }
    if classes.len() > 2 {
        return Err(Error::invalid(format!(
            "expected at most two label classes, found {}",
            classes.len()
        )));
    }
    if classes.iter().all(|&c| c == 1.0 || c == -1.0) {
        return Ok(raw.to_vec());
    }
    if !classes.contains(&1.0) && classes.len() == 2 {
        return Err(Error::invalid(format!(
            "cannot map label classes {classes:?} to -1/+1"
        )));
    }
    Ok(raw.iter().map(|&y| if y == 1.0 { 1.0 } else { -1.0 }).collect())
}
