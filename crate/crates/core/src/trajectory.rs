//! Per-step run records and their CSV form.
//!
//! Numbers are written with 17 significant digits so that parsing a CSV back
//! reproduces every `f64` bit for bit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Vector;

pub const CSV_HEADER: &str = "t,k,f_value,grad_norm_sq,E_t,Delta_t,calls_f,calls_h,calls_fmh";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: usize,
    pub k: usize,
    pub f_value: f64,
    pub grad_norm_sq: f64,
    pub e_t: f64,
    pub delta_t: f64,
    pub calls_f: u64,
    pub calls_h: u64,
    pub calls_fmh: u64,
}

impl Row {
    /// Gradient calls that touch `f`: direct `f` draws plus difference draws.
    pub fn f_budget(&self) -> u64 {
        self.calls_f + self.calls_fmh
    }
}

/// Cycle-level diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub t: usize,
    /// Squared momentum error at the cycle's snapshot.
    pub e_t: f64,
    /// `|x^t - x^{t-1}|^2`.
    pub delta_t: f64,
    /// Mean of `|grad f(y_k)|^2` over the cycle's pre-step points.
    pub g_t: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub rows: Vec<Row>,
    pub cycles: Vec<CycleSummary>,
    pub final_x: Option<Vector>,
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    if s == "nan" {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number `{s}`"),
    })
}

fn parse_int<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid integer `{s}`"),
    })
}

impl Trajectory {
    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }

    /// `|grad f|^2` at the last recorded point.
    pub fn final_grad_norm_sq(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.grad_norm_sq)
    }

    pub fn final_f_value(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.f_value)
    }

    /// Rows at cycle boundaries: the initial point and each `x^t`.
    pub fn snapshots(&self) -> impl Iterator<Item = &Row> {
        let k_max = self.rows.iter().map(|r| r.k).max().unwrap_or(0);
        self.rows.iter().filter(move |r| r.t == 0 || r.k == k_max)
    }

    /// First cycle whose end point has `|grad f|^2 < threshold`.
    pub fn cycles_to_threshold(&self, threshold: f64) -> Option<usize> {
        self.snapshots()
            .find(|r| r.grad_norm_sq < threshold)
            .map(|r| r.t)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.t,
                r.k,
                fmt_f64(r.f_value),
                fmt_f64(r.grad_norm_sq),
                fmt_f64(r.e_t),
                fmt_f64(r.delta_t),
                r.calls_f,
                r.calls_h,
                r.calls_fmh
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Parses rows written by [`Trajectory::write_csv`]. Metadata is not part
    /// of the CSV and comes back empty.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Trajectory> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header `{header}`"),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 9 fields, got {}", f.len()),
                });
            }
            rows.push(Row {
                t: parse_int(f[0], lineno)?,
                k: parse_int(f[1], lineno)?,
                f_value: parse_f64(f[2], lineno)?,
                grad_norm_sq: parse_f64(f[3], lineno)?,
                e_t: parse_f64(f[4], lineno)?,
                delta_t: parse_f64(f[5], lineno)?,
                calls_f: parse_int(f[6], lineno)?,
                calls_h: parse_int(f[7], lineno)?,
                calls_fmh: parse_int(f[8], lineno)?,
            });
        }
        Ok(Trajectory {
            rows,
            ..Default::default()
        })
    }
}
