//! Cost-to-threshold tables over a directory of trace CSVs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use fedcgm_core::RunTrace;
use serde::{Deserialize, Serialize};

/// Parsed `{algo}__seed{seed}[__{param}={value}]` file stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceName {
    pub algo: String,
    pub seed: u64,
    pub sweep: Option<String>,
}

impl TraceName {
    pub fn parse(stem: &str) -> Option<Self> {
        let mut parts = stem.split("__");
        let algo = parts.next()?.to_string();
        let seed = parts.next()?.strip_prefix("seed")?.parse().ok()?;
        let sweep = parts.next().map(str::to_string);
        if parts.next().is_some() || algo.is_empty() {
            return None;
        }
        Some(Self { algo, seed, sweep })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: String,
    pub sweep: String,
    pub threshold: f64,
    pub n_seeds: usize,
    pub n_reached: usize,
    pub comm_mean: f64,
    pub comm_min: f64,
    pub comm_max: f64,
    pub local_mean: f64,
    pub local_min: f64,
    pub local_max: f64,
    /// `reached` (every seed), `partial`, or `not reached` (costs are then the
    /// total budgets).
    pub status: String,
}

pub fn read_traces(dir: &Path) -> anyhow::Result<Vec<(TraceName, RunTrace)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(name) = path.file_stem().and_then(|s| s.to_str()).and_then(TraceName::parse) else {
            continue;
        };
        let f = File::open(&path)?;
        let trace = RunTrace::read_csv(f, name.algo.clone(), name.seed).with_context(|| format!("parsing {}", path.display()))?;
        out.push((name, trace));
    }
    out.sort_by(|a, b| (&a.0.algo, &a.0.sweep, a.0.seed).cmp(&(&b.0.algo, &b.0.sweep, b.0.seed)));
    Ok(out)
}

fn stats(v: &[(f64, f64)]) -> (f64, f64, f64, f64, f64, f64) {
    let n = v.len() as f64;
    let (mut cs, mut cmin, mut cmax, mut ls, mut lmin, mut lmax) = (0.0, f64::INFINITY, f64::NEG_INFINITY, 0.0, f64::INFINITY, f64::NEG_INFINITY);
    for &(c, l) in v {
        cs += c;
        ls += l;
        cmin = cmin.min(c);
        cmax = cmax.max(c);
        lmin = lmin.min(l);
        lmax = lmax.max(l);
    }
    (cs / n, cmin, cmax, ls / n, lmin, lmax)
}

fn comm_f64(r: &fedcgm_core::TraceRow) -> f64 {
    *r.cum_comm.numer() as f64 / *r.cum_comm.denom() as f64
}

pub fn summarize_traces(traces: &[(TraceName, RunTrace)], thresholds: &[f64]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<&RunTrace>> = BTreeMap::new();
    for (name, t) in traces {
        groups.entry((name.algo.clone(), name.sweep.clone().unwrap_or_default())).or_default().push(t);
    }
    let mut rows = Vec::new();
    for ((algo, sweep), ts) in &groups {
        for &th in thresholds {
            let reached: Vec<(f64, f64)> =
                ts.iter().filter_map(|t| t.first_reaching(th)).map(|r| (comm_f64(r), r.cum_local as f64)).collect();
            let (status, pool) = if reached.len() == ts.len() {
                ("reached", reached.clone())
            } else if reached.is_empty() {
                let budgets = ts.iter().filter_map(|t| t.last()).map(|r| (comm_f64(r), r.cum_local as f64)).collect();
                ("not reached", budgets)
            } else {
                ("partial", reached.clone())
            };
            let (cm, cmin, cmax, lm, lmin, lmax) = if pool.is_empty() { (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN) } else { stats(&pool) };
            rows.push(SummaryRow {
                algo: algo.clone(),
                sweep: sweep.clone(),
                threshold: th,
                n_seeds: ts.len(),
                n_reached: reached.len(),
                comm_mean: cm,
                comm_min: cmin,
                comm_max: cmax,
                local_mean: lm,
                local_min: lmin,
                local_max: lmax,
                status: status.to_string(),
            });
        }
    }
    rows
}

pub fn summarize(dir: &Path, thresholds: &[f64]) -> anyhow::Result<Vec<SummaryRow>> {
    if thresholds.is_empty() {
        return Err(anyhow!("no thresholds given"));
    }
    let traces = read_traces(dir)?;
    if traces.is_empty() {
        return Err(anyhow!("no trace files in {}", dir.display()));
    }
    Ok(summarize_traces(&traces, thresholds))
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedcgm_core::TraceRow;
    use num_rational::Rational64;

    fn trace(seed: u64, pts: &[(i64, u64, f64)]) -> RunTrace {
        let mut t = RunTrace::new("gd", seed);
        for (k, &(c, l, g)) in pts.iter().enumerate() {
            t.push(TraceRow {
                round: k,
                cum_comm: Rational64::from_integer(c),
                cum_local: l,
                grad_norm_sq: g,
                f_value: f64::NAN,
                e_t: f64::NAN,
                sigma_hat_sq: f64::NAN,
                local_steps: 1,
                n_a: 0,
                n_r: 0,
                n_d: 0,
            });
        }
        t
    }

    fn name(seed: u64) -> TraceName {
        TraceName { algo: "gd".into(), seed, sweep: None }
    }

    #[test]
    fn stems() {
        assert_eq!(TraceName::parse("icgm-rg-saga__seed3__c_a=5").unwrap().sweep.as_deref(), Some("c_a=5"));
        assert_eq!(TraceName::parse("gd__seed0").unwrap(), name(0));
        assert!(TraceName::parse("summary").is_none());
        assert!(TraceName::parse("gd__s0").is_none());
    }

    #[test]
    fn threshold_above_start_costs_nothing() {
        let t = vec![(name(0), trace(0, &[(0, 0, 5.0), (4, 1, 1.0)]))];
        let r = &summarize_traces(&t, &[10.0])[0];
        assert_eq!((r.comm_mean, r.local_mean, r.status.as_str()), (0.0, 0.0, "reached"));
    }

    #[test]
    fn unreachable_reports_budget() {
        let t = vec![(name(0), trace(0, &[(0, 0, 5.0), (4, 1, 1.0)]))];
        let r = &summarize_traces(&t, &[0.1])[0];
        assert_eq!(r.status, "not reached");
        assert_eq!(r.n_reached, 0);
        assert_eq!(r.comm_mean, 4.0);
    }

    #[test]
    fn two_seed_average_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = trace(0, &[(0, 0, 5.0), (3, 2, 0.5), (6, 4, 0.1)]);
        let b = trace(1, &[(0, 0, 5.0), (3, 2, 2.0), (6, 4, 0.4)]);
        a.write_csv(File::create(dir.path().join("gd__seed0.csv")).unwrap()).unwrap();
        b.write_csv(File::create(dir.path().join("gd__seed1.csv")).unwrap()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let rows = summarize(dir.path(), &[1.0, 0.2]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].comm_mean, rows[0].comm_min, rows[0].comm_max), (4.5, 3.0, 6.0));
        assert_eq!(rows[0].local_mean, 3.0);
        assert_eq!(rows[1].status, "partial");
        assert_eq!(rows[1].n_reached, 1);
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("algo,sweep,threshold,n_seeds,n_reached,comm_mean,comm_min,comm_max,local_mean,local_min,local_max,status"));
    }
}
