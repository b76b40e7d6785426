//! Acceptance criteria 1 to 10. Prints one line per criterion and exits non-zero
//! when any of them fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fedcgm_cli::presets::preset;
use fedcgm_cli::runner::run_experiment;
use fedcgm_cli::summarize::read_traces;
use fedcgm_cli::ExperimentConfig;
use fedcgm_core::rng::seeded;
use fedcgm_core::solver::LocalSolver;
use fedcgm_core::verification::{
    check_conditional_unbiasedness, check_geometric_queries, check_geometric_sampler, check_rate_envelope,
    check_subproblem_contracts, check_variance_bounds, enumerate_subset_mean, random_instance, sag_counterexample,
    UnbiasednessTarget, VarianceCheckConfig,
};
use fedcgm_core::{run_icgm, CostConfig, CostLedger, EstimatorKind, QuadLogSumInstance, QuadLogSumParams, RunTrace, SolverConfig};
use num_rational::Rational64;
use rand::Rng;

type Outcome = anyhow::Result<(bool, String)>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);
/// (algo, sweep label, seed) to (communication at the threshold, total budget).
type CommTable = BTreeMap<(String, String, u64), (Option<f64>, f64)>;

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let e = start.elapsed();
    (e <= limit, format!("{:.2}s (limit {}s)", e.as_secs_f64(), limit.as_secs()))
}

fn subset_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(2024);
    let (mut worst, mut cases) = (0.0f64, 0);
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..=4);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        for m in 1..=n {
            let mo = enumerate_subset_mean(&v, m)?;
            let err = if mo.formula == 0.0 { mo.deviation.abs() } else { (mo.deviation - mo.formula).abs() / mo.formula };
            worst = worst.max(err);
            cases += 1;
        }
    }
    let (fast, time) = within(start, Duration::from_secs(1));
    Ok((worst <= 1e-12 && fast, format!("{cases} (set, m) cases, worst relative error {worst:.1e}, {time}")))
}

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut checks, mut ok) = (0.0f64, 0, true);
    for n in 4..=8 {
        let problem = random_instance(n, 3, 50 + n as u64)?;
        for m in 1..n {
            for target in [UnbiasednessTarget::Saga, UnbiasednessTarget::Svrg, UnbiasednessTarget::RgSaga, UnbiasednessTarget::RgSvrg] {
                let r = check_conditional_unbiasedness(target, &problem, m, 11)?;
                worst = worst.max(r.observed);
                ok &= r.pass;
                checks += 1;
            }
        }
    }
    let sag = sag_counterexample()?;
    let control = sag.iter().find(|r| r.name == "sag/biased").map(|r| (r.pass, r.observed)).unwrap_or((false, 0.0));
    let (fast, time) = within(start, Duration::from_secs(5));
    Ok((
        ok && control.0 && fast,
        format!("{checks} checks, worst gap {worst:.1e}; SAG control bias {:.3e} (fails unbiasedness as expected); {time}", control.1),
    ))
}

fn geometric() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.5, 0.1, 0.01] {
        let s = check_geometric_sampler(p, 100_000, 5)?;
        let q = check_geometric_queries(p, 10_000, 5)?;
        ok &= s.pass && q.pass;
        parts.push(format!("p={p}: mean {:.3} vs {:.3}, queries {:.2} vs {:.2}", s.observed, s.reference, q.observed, q.reference));
    }
    Ok((ok, parts.join("; ")))
}

fn contracts() -> Outcome {
    let c = check_subproblem_contracts(20, 50, &[0, 1, 2, 3, 4], 20)?;
    Ok((
        c.strict_monotone.pass && c.gradient_bound.pass,
        format!(
            "monotone {}/{} exact, {}/{} with rounding slack; gradient-bound violations {} over {} local steps ({})",
            c.strict_monotone.observed,
            c.strict_monotone.reference,
            c.monotone.observed,
            c.monotone.reference,
            c.gradient_bound.observed,
            c.gradient_bound.samples,
            c.gradient_bound.detail
        ),
    ))
}

fn ledger_exactness() -> Outcome {
    let r = Rational64::new;
    let mut ok = true;
    let n = 9;
    for (c_a, c_r, m) in [(r(7, 1), r(2, 1), 3), (r(9, 2), r(3, 2), 2), (r(1, 1), r(1, 1), 4)] {
        let mut ledger = CostLedger::new(CostConfig::new(c_a, c_r, m)?, n)?;
        let mut rng = seeded(8);
        for step in 0..30u64 {
            match step % 4 {
                0 => {
                    let mut h = ledger.select_arbitrary(&(0..m).collect::<Vec<_>>())?;
                    h.record_all(step % 3 + 1);
                    ledger.close_round(h);
                }
                1 => {
                    let (_, mut h) = ledger.select_random(&mut rng);
                    h.record_all(2);
                    ledger.close_round(h);
                }
                2 => {
                    let mut h = ledger.select_delegate();
                    h.record(0, 5)?;
                    ledger.close_round(h);
                }
                _ => ledger.full_sync(),
            }
        }
        let expect = c_a * Rational64::from_integer(ledger.n_a() as i64)
            + c_r * Rational64::from_integer(ledger.n_r() as i64)
            + Rational64::from_integer(ledger.n_d() as i64);
        ok &= ledger.communication() == expect;
    }

    let params = QuadLogSumParams::desk(10, 6);
    let inst = QuadLogSumInstance::generate(&params, 2)?;
    let (c_a, c_r) = (r(9, 2), r(3, 2));
    for m in [1usize, 3, 4, 10] {
        let cost = CostConfig::new(c_a, c_r, m)?;
        let cfg = SolverConfig::new(EstimatorKind::RgSaga, 40.0, 0.5, LocalSolver::Geometric { p: 0.3 }, 12, 5);
        let out = run_icgm(&inst.problem, &inst.constants, &cost, &cfg, &[1.0; 6])?;
        let sync = 10usize.div_ceil(m) as u64;
        let init = c_a * Rational64::from_integer(2 * sync as i64);
        let rows = &out.trace.rows;
        ok &= rows[1].n_a == 2 * sync && rows[1].cum_comm == init + c_r + 1;
        ok &= rows[1..].windows(2).all(|w| w[1].cum_comm - w[0].cum_comm == c_r + 1);
        ok &= out.totals.communication == init + (c_r + 1) * 12;
    }
    Ok((ok, "scripted rounds exact; RG-SAGA init 2 ceil(n/m) ASS rounds then c_r + 1 per iteration for m in {1,3,4,10}".into()))
}

fn variance_bounds() -> Outcome {
    let reports = check_variance_bounds(&VarianceCheckConfig::default())?;
    let ok = reports.iter().all(|r| r.pass);
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            if r.name.starts_with("paired") {
                format!("{} {:.3} (need >= {})", r.name, r.observed, r.reference)
            } else {
                format!("{} {:.4e} +/- {:.1e} <= {:.4e}", r.name, r.observed, r.stderr, r.reference)
            }
        })
        .collect();
    Ok((ok, parts.join("; ")))
}

fn rate_envelope() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..30).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [100, 1000] {
        let r = check_rate_envelope(20, 4, 50, t, &seeds)?;
        ok &= r.pass;
        parts.push(format!("T={t}: {:.4e} +/- {:.1e} <= {:.4e}", r.observed, r.stderr, r.reference));
    }
    let (fast, time) = within(start, Duration::from_secs(120));
    Ok((ok && fast, format!("{}; {time}", parts.join("; "))))
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Communication at the first row with `grad_norm_sq <= th`, per (algo, sweep, seed).
fn comm_to(dir: &Path, th: f64) -> anyhow::Result<CommTable> {
    let mut out = BTreeMap::new();
    for (name, trace) in read_traces(dir)? {
        let f = |r: &fedcgm_core::TraceRow| *r.cum_comm.numer() as f64 / *r.cum_comm.denom() as f64;
        let budget = trace.last().map(f).unwrap_or(0.0);
        out.insert((name.algo, name.sweep.unwrap_or_default(), name.seed), (trace.first_reaching(th).map(f), budget));
    }
    Ok(out)
}

fn fig2_ordering(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let mut cfg = preset("fig2-desk").expect("preset");
    cfg.out = tmp.join("fig2");
    cfg.diagnostics = false;
    run_experiment(&cfg, workers())?;
    let th = 1e-4;
    let table = comm_to(&cfg.out, th)?;
    let mut wins = 0;
    let mut worst = Vec::new();
    for &seed in &cfg.seeds {
        let Some(Some(ours)) = table.get(&("icgm-rg-saga".into(), String::new(), seed)).map(|v| v.0) else { continue };
        // A competitor that never reaches the threshold loses only if its budget
        // already exceeds the winner's cost.
        let beats = ["gd", "fedavg", "scaffold"].iter().all(|a| match table.get(&(a.to_string(), String::new(), seed)) {
            Some((Some(c), _)) => ours < *c,
            Some((None, budget)) => ours < *budget,
            None => false,
        });
        wins += usize::from(beats);
        worst.push(ours);
    }
    let (fast, time) = within(start, Duration::from_secs(300));
    let mean_of = |a: &str| {
        let v: Vec<f64> = cfg.seeds.iter().filter_map(|&s| table.get(&(a.to_string(), String::new(), s)).and_then(|v| v.0)).collect();
        if v.is_empty() { "not reached".to_string() } else { format!("{:.0}", v.iter().sum::<f64>() / v.len() as f64) }
    };
    Ok((
        wins >= 8 && fast,
        format!(
            "RG-SAGA cheapest on {wins}/10 seeds; mean comm to 1e-4: rg-saga {}, gd {}, fedavg {}, scaffold {}; {time}",
            mean_of("icgm-rg-saga"),
            mean_of("gd"),
            mean_of("fedavg"),
            mean_of("scaffold")
        ),
    ))
}

fn ca_ablation(tmp: &Path) -> Outcome {
    let mut cfg = preset("ablation-ca").expect("preset");
    let desk = preset("fig2-desk").expect("preset");
    cfg.problem = desk.problem;
    cfg.cost.m = desk.cost.m;
    cfg.seeds = (0..5).collect();
    cfg.diagnostics = false;
    cfg.out = tmp.join("ablation-ca");
    run_experiment(&cfg, workers())?;
    let table = comm_to(&cfg.out, 1e-4)?;
    let n = cfg.problem.n();
    let sync = n.div_ceil(cfg.cost.m.unwrap_or(1)) as f64;
    let mean = |algo: &str, ca: f64| -> Option<f64> {
        let key = format!("c_a={ca}");
        let v: Vec<f64> = cfg.seeds.iter().map(|&s| table.get(&(algo.to_string(), key.clone(), s)).and_then(|v| v.0)).collect::<Option<_>>()?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    };
    let cas = [1.0, 5.0, 10.0, 20.0];
    let svrg: Option<Vec<f64>> = cas.iter().map(|&c| mean("icgm-rg-svrg", c)).collect();
    let saga: Option<Vec<f64>> = cas.iter().map(|&c| mean("icgm-rg-saga", c).map(|v| v - 2.0 * c * sync)).collect();
    let (Some(svrg), Some(saga)) = (svrg, saga) else {
        return Ok((false, "a run did not reach the threshold".into()));
    };
    let grows = svrg.windows(2).all(|w| w[1] > w[0]);
    let flat = saga.iter().all(|v| (v - saga[0]).abs() <= 0.1 * saga[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.0}")).collect::<Vec<_>>().join(", ");
    Ok((
        grows && flat,
        format!("rg-svrg comm over c_a {{1,5,10,20}}: {}; rg-saga minus init: {}", fmt(&svrg), fmt(&saga)),
    ))
}

fn determinism(tmp: &Path) -> Outcome {
    let mut cfg: ExperimentConfig = preset("fig2-desk").expect("preset");
    for a in &mut cfg.algorithms {
        a.t = Some(40);
    }
    cfg.seeds = vec![3, 4];
    let mut files = Vec::new();
    for run in ["a", "b"] {
        cfg.out = tmp.join(format!("det-{run}"));
        run_experiment(&cfg, workers())?;
        let mut names: Vec<_> = std::fs::read_dir(&cfg.out)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        names.sort();
        files.push(names);
    }
    let mut same = files[0].len() == files[1].len() && !files[0].is_empty();
    for (a, b) in files[0].iter().zip(&files[1]) {
        same &= a.file_name() == b.file_name() && std::fs::read(a)? == std::fs::read(b)?;
        let trace = RunTrace::read_csv(std::fs::File::open(a)?, "x", 0)?;
        same &= !trace.is_empty();
    }
    Ok((same, format!("{} trace files byte-identical across two runs", files[0].len())))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: [Criterion; 10] = [
        ("sampling-variance identity", Box::new(subset_identity)),
        ("conditional unbiasedness", Box::new(unbiasedness)),
        ("geometric local steps", Box::new(geometric)),
        ("subproblem contracts", Box::new(contracts)),
        ("cost ledger exactness", Box::new(ledger_exactness)),
        ("variance-bound envelopes", Box::new(variance_bounds)),
        ("rate envelope", Box::new(rate_envelope)),
        ("desk-scale comparison ordering", Box::new(|| fig2_ordering(tmp.path()))),
        ("C_A ablation", Box::new(|| ca_ablation(tmp.path()))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e:#}")));
        failed += usize::from(!pass);
        println!("criterion {:>2} [{}] {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
