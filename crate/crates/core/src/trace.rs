//! Per-iteration run records and their CSV form.

use std::io::{Read, Write};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 11] = [
    "round",
    "cum_comm",
    "cum_local",
    "grad_norm_sq",
    "f_value",
    "e_t",
    "sigma_hat_sq",
    "local_steps",
    "n_a",
    "n_r",
    "n_d",
];

/// State at `x^t`. Fields that do not apply are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub cum_comm: Rational64,
    pub cum_local: u64,
    pub grad_norm_sq: f64,
    pub f_value: f64,
    /// `||grad F_{t-1}(x^t)||` for the subproblem that produced `x^t`.
    pub e_t: f64,
    /// `||g^t - grad f(x^t)||^2`
    pub sigma_hat_sq: f64,
    /// Local steps spent producing `x^t`.
    pub local_steps: u64,
    pub n_a: u64,
    pub n_r: u64,
    pub n_d: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algo: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn new(algo: impl Into<String>, seed: u64) -> Self {
        Self { algo: algo.into(), seed, rows: Vec::new() }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Smallest finite `grad_norm_sq` in the trace.
    pub fn min_grad_norm_sq(&self) -> Option<f64> {
        self.rows
            .iter()
            .map(|r| r.grad_norm_sq)
            .filter(|v| v.is_finite())
            .min_by(f64::total_cmp)
    }

    /// First row whose `grad_norm_sq` is at or below `threshold`.
    pub fn first_reaching(&self, threshold: f64) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.grad_norm_sq <= threshold)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.round.to_string(),
                r.cum_comm.to_string(),
                r.cum_local.to_string(),
                fmt_f64(r.grad_norm_sq),
                fmt_f64(r.f_value),
                fmt_f64(r.e_t),
                fmt_f64(r.sigma_hat_sq),
                r.local_steps.to_string(),
                r.n_a.to_string(),
                r.n_r.to_string(),
                r.n_d.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a trace written by [`RunTrace::write_csv`]. The header must match
    /// [`TRACE_COLUMNS`] exactly.
    pub fn read_csv<R: Read>(reader: R, algo: impl Into<String>, seed: u64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header = rd.headers()?.clone();
        if header.iter().ne(TRACE_COLUMNS) {
            return Err(SimError::Data { line: 1, message: format!("unexpected trace header {header:?}") });
        }
        let mut trace = Self::new(algo, seed);
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let bad = |col: &str| SimError::Data { line, message: format!("bad {col} cell") };
            let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(TRACE_COLUMNS[i]));
            let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(TRACE_COLUMNS[i]));
            trace.push(TraceRow {
                round: int(0)? as usize,
                cum_comm: parse_rational(&rec[1]).ok_or_else(|| bad("cum_comm"))?,
                cum_local: int(2)?,
                grad_norm_sq: float(3)?,
                f_value: float(4)?,
                e_t: float(5)?,
                sigma_hat_sq: float(6)?,
                local_steps: int(7)?,
                n_a: int(8)?,
                n_r: int(9)?,
                n_d: int(10)?,
            });
        }
        Ok(trace)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip representation; `NaN` for missing values.
fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:e}")
    }
}

/// Parses a `cum_comm` cell written as `p` or `p/q`.
pub fn parse_rational(s: &str) -> Option<Rational64> {
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().ok()?;
            let q: i64 = q.trim().parse().ok()?;
            (q != 0).then(|| Rational64::new(p, q))
        }
        None => Some(Rational64::from_integer(s.trim().parse().ok()?)),
    }
}
