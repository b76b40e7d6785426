//! Reader for LIBSVM text files: `label index:value index:value ...`, 1-based and
//! strictly increasing indices.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    /// 0-based feature indices, strictly increasing.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&k, v)| v * x[k]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseDataset {
    pub rows: Vec<SparseRow>,
    pub labels: Vec<f64>,
    /// Number of features (largest index seen).
    pub dim: usize,
    /// Source line of each row, for error messages.
    pub lines: Vec<usize>,
}

impl SparseDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Maps a two-valued label set to `{-1, +1}`, smaller value first.
    /// Labels already in `{-1, +1}` are left alone.
    pub fn remap_binary_labels(&mut self) -> Result<()> {
        let mut distinct: Vec<f64> = Vec::new();
        for &y in &self.labels {
            if !distinct.contains(&y) {
                distinct.push(y);
            }
        }
        distinct.sort_by(f64::total_cmp);
        if distinct.iter().all(|&y| y == -1.0 || y == 1.0) {
            return Ok(());
        }
        if distinct.len() != 2 {
            return Err(SimError::InvalidInput(format!(
                "expected two distinct labels, found {distinct:?}"
            )));
        }
        let low = distinct[0];
        for y in &mut self.labels {
            *y = if *y == low { -1.0 } else { 1.0 };
        }
        Ok(())
    }
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<SparseDataset> {
    let file = File::open(path.as_ref())?;
    parse_libsvm(BufReader::new(file))
}

pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<SparseDataset> {
    let mut data = SparseDataset::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| SimError::Data { line: line_no, message };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label {label_tok:?}")))?;
        let mut row = SparseRow::default();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad index in {tok:?}")))?;
            let val: f64 = val.parse().map_err(|_| err(format!("bad value in {tok:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if !val.is_finite() {
                return Err(err(format!("non-finite value in {tok:?}")));
            }
            if let Some(&prev) = row.indices.last() {
                if idx - 1 == prev {
                    return Err(err(format!("duplicate feature index {idx}")));
                }
                if idx - 1 < prev {
                    return Err(err(format!("feature index {idx} after {}", prev + 1)));
                }
            }
            row.indices.push(idx - 1);
            row.values.push(val);
        }
        if let Some(&last) = row.indices.last() {
            data.dim = data.dim.max(last + 1);
        }
        data.rows.push(row);
        data.labels.push(label);
        data.lines.push(line_no);
    }
    Ok(data)
}
