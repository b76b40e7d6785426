//! Expands a config into runs, executes them on a worker pool and writes one trace
//! CSV and one summary JSON per run.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use fedcgm_core::baselines::{run_baseline, BaselineConfig, BaselineKind};
use fedcgm_core::problems::libsvm::{read_libsvm, SparseDataset};
use fedcgm_core::problems::logistic::gen_logistic_with;
use fedcgm_core::problems::probe_constants;
use fedcgm_core::rng::seeded;
use fedcgm_core::solver::{default_params_rg_saga, default_params_rg_svrg, experiment_params};
use fedcgm_core::{
    run_icgm, CostConfig, EstimatorKind, LocalSolver, ProblemInstance, QuadLogSumInstance, RunTrace, SimError,
    SimilarityConstants, SolverConfig,
};
use log::{info, warn};
use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlgoSpec, ExperimentConfig, ParamRule, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoName {
    Icgm(EstimatorKind),
    Baseline(BaselineKind),
}

impl AlgoName {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        if let Some(rest) = s.strip_prefix("icgm-") {
            return rest.parse().map(Self::Icgm).map_err(|_| anyhow!("unknown algorithm {s:?}"));
        }
        s.parse().map(Self::Baseline).map_err(|_| anyhow!("unknown algorithm {s:?}"))
    }
}

/// A generated problem with the constants used to fill in parameters.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: Arc<ProblemInstance>,
    pub constants: SimilarityConstants,
    /// Largest client smoothness, or `L_1` when unknown.
    pub lmax: f64,
}

pub fn build_instance(spec: &ProblemSpec, n: Option<usize>, data: Option<&SparseDataset>) -> anyhow::Result<Instance> {
    match spec {
        ProblemSpec::Quadratic { params, instance_seed } => {
            let mut params = params.clone();
            if let Some(n) = n {
                params.n = n;
            }
            let inst = QuadLogSumInstance::generate(&params, *instance_seed)?;
            let lmax = inst.constants.lmax.unwrap_or(inst.constants.l1);
            Ok(Instance { constants: inst.constants, lmax, problem: Arc::new(inst.problem) })
        }
        ProblemSpec::Logistic { n: n0, alpha, sharding, probe_seed, .. } => {
            let data = data.ok_or_else(|| anyhow!("logistic problem without loaded data"))?;
            let problem = gen_logistic_with(data, n.unwrap_or(*n0), *alpha, *sharding)?;
            let center = vec![0.0; problem.dim()];
            let constants = probe_constants(&problem, &center, 1.0, 64, &mut seeded(*probe_seed))?;
            Ok(Instance { lmax: constants.l1, constants, problem: Arc::new(problem) })
        }
    }
}

pub fn load_data(spec: &ProblemSpec) -> anyhow::Result<Option<SparseDataset>> {
    match spec {
        ProblemSpec::Logistic { path, .. } => {
            let mut data = read_libsvm(path).with_context(|| format!("loading dataset {}", path.display()))?;
            data.remap_binary_labels()?;
            Ok(Some(data))
        }
        ProblemSpec::Quadratic { .. } => Ok(None),
    }
}

/// One (algorithm, seed, sweep value) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub algo: AlgoSpec,
    pub seed: u64,
    pub sweep: Option<(String, f64)>,
}

impl Job {
    /// `{algo}__seed{seed}` with `__{param}={value}` appended under a sweep.
    pub fn stem(&self) -> String {
        let mut s = format!("{}__seed{}", self.algo.name, self.seed);
        if let Some((p, v)) = &self.sweep {
            s.push_str(&format!("__{p}={v}"));
        }
        s
    }

    pub fn sweep_label(&self) -> Option<String> {
        self.sweep.as_ref().map(|(p, v)| format!("{p}={v}"))
    }
}

pub fn expand_jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let values: Vec<Option<(String, f64)>> = match &cfg.sweep {
        Some(s) => s.values.iter().map(|&v| Some((s.param.clone(), v))).collect(),
        None => vec![None],
    };
    let mut jobs = Vec::new();
    for sweep in &values {
        for algo in &cfg.algorithms {
            for &seed in &cfg.seeds {
                jobs.push(Job { algo: algo.clone(), seed, sweep: sweep.clone() });
            }
        }
    }
    jobs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: String,
    pub seed: u64,
    pub sweep: Option<String>,
    pub total_comm: f64,
    pub total_local: u64,
    pub min_grad_norm_sq: Option<f64>,
    pub final_f: Option<f64>,
    pub diverged: bool,
    pub runtime_ms: u64,
}

fn rational(v: f64) -> anyhow::Result<Rational64> {
    Rational64::approximate_float(v).ok_or_else(|| anyhow!("cost {v} is not representable"))
}

fn as_count(v: f64, what: &str) -> anyhow::Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        bail!("{what} must be a non-negative integer, got {v}")
    }
}

/// Parameters of one run after applying the rule, the algorithm overrides and the
/// sweep value, in that order.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Icgm(SolverConfig),
    Baseline(BaselineConfig),
}

pub struct Prepared {
    pub instance: Instance,
    pub cost: CostConfig,
    pub resolved: Resolved,
    pub x0: Vec<f64>,
}

pub fn prepare(cfg: &ExperimentConfig, job: &Job, data: Option<&SparseDataset>) -> anyhow::Result<Prepared> {
    let sweep = |name: &str| job.sweep.as_ref().filter(|(p, _)| p == name).map(|(_, v)| *v);
    let n_override = sweep("n").map(|v| as_count(v, "n")).transpose()?.map(|v| v as usize);
    let instance = build_instance(&cfg.problem, n_override, data)?;
    let problem = &instance.problem;
    let n = problem.n();
    let c = instance.constants;

    let m = match sweep("m") {
        Some(v) => as_count(v, "m")? as usize,
        None => cfg.cost.m.unwrap_or_else(|| ((n as f64).sqrt().round() as usize).max(1)),
    }
    .min(n);
    let c_a = sweep("c_a").map(rational).transpose()?.unwrap_or(cfg.cost.c_a.0);
    let c_r = sweep("c_r").map(rational).transpose()?.unwrap_or(cfg.cost.c_r.0);
    let cost = CostConfig::new(c_a, c_r, m)?;
    cost.validate(n)?;
    let x0 = vec![cfg.x0; problem.dim()];

    let exp = experiment_params(c.delta, c.delta1, instance.lmax, n, m)?;
    let n_m = SimilarityConstants::n_m(n, m);
    let ratio = (m as f64 / n as f64).min(1.0);
    let (mut lambda, mut beta, mut p, mut p_b, mut eta) = (exp.lambda, exp.beta, exp.p, ratio, Some(exp.eta));
    match cfg.rule {
        ParamRule::Experiment => {}
        ParamRule::NAblation => {
            lambda = n_m.sqrt() * c.delta;
            beta = ratio;
            p = lambda / (lambda + instance.lmax);
        }
        ParamRule::Theory => {
            let f0 = (problem.full_objective(&x0)? - problem.lower_bound_hint.unwrap_or(0.0)).max(f64::MIN_POSITIVE);
            let saga = default_params_rg_saga(c.delta1, c.delta, n, m, c.l1, f0, 1.0)?;
            (lambda, beta, p, eta) = (saga.lambda, saga.beta, saga.p, None);
            if matches!(AlgoName::parse(&job.algo.name)?, AlgoName::Icgm(EstimatorKind::RgSvrg | EstimatorKind::SvrgDirect)) {
                let svrg = default_params_rg_svrg(c.delta1, c.delta, n, m, c.l1, c_a, c_r, f0, 1.0)?;
                (lambda, beta, p, p_b) = (svrg.lambda, svrg.beta, svrg.p, svrg.p_b);
            }
        }
    }
    let a = &job.algo;
    let pick = |name: &str, spec: Option<f64>, rule: f64| sweep(name).or(spec).unwrap_or(rule);
    lambda = pick("lambda", a.lambda, lambda);
    beta = pick("beta", a.beta, beta);
    p = pick("p", a.p, p);
    p_b = pick("p_b", a.p_b, p_b);
    if let Some(e) = a.eta {
        eta = Some(e);
    }
    let t = a.t.unwrap_or(cfg.t);
    let k = sweep("k").map(|v| as_count(v, "k")).transpose()?.or(a.k);

    let resolved = match AlgoName::parse(&a.name)? {
        AlgoName::Icgm(est) => {
            let local = match a.local_k {
                Some(k) => LocalSolver::Const { k },
                None => LocalSolver::Geometric { p },
            };
            let mut sc = SolverConfig::new(est, lambda, beta, local, t, job.seed);
            sc.p_b = p_b;
            sc.local_smoothness = eta;
            sc.diagnostics = cfg.diagnostics;
            if let Some(t0) = sweep("t0").map(|v| as_count(v, "t0")).transpose()?.map(|v| v as u8).or(a.t0) {
                sc.init_mode = t0;
            }
            if let Some(th) = cfg.stop_at {
                sc.early_stop = true;
                sc.epsilon = th.sqrt();
            }
            Resolved::Icgm(sc)
        }
        AlgoName::Baseline(kind) => {
            let mut bc = BaselineConfig::new(kind, t, job.seed);
            bc.diagnostics = cfg.diagnostics;
            bc.lambda = lambda;
            bc.eta = eta.unwrap_or(2.0 * instance.lmax);
            bc.local_smoothness = bc.eta;
            match kind {
                BaselineKind::Gd => bc.step = 1.0 / instance.lmax,
                BaselineKind::FedRedGd => bc.p = p,
                BaselineKind::SaberFull => {
                    bc.p = sweep("p").or(a.p).unwrap_or(0.1);
                    bc.local_solver = LocalSolver::Const { k: k.unwrap_or(20) };
                }
                BaselineKind::FedAvg | BaselineKind::Scaffold => {}
            }
            if let Some(s) = sweep("step").or(a.step) {
                bc.step = s;
            }
            if let Some(k) = k {
                bc.k = k;
            }
            Resolved::Baseline(bc)
        }
    };
    Ok(Prepared { instance, cost, resolved, x0 })
}

fn write_trace(path: &Path, trace: &RunTrace) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    trace.write_csv(BufWriter::new(f))?;
    Ok(())
}

/// Runs one job and writes `{stem}.csv` and `{stem}.json` into `out`.
pub fn run_job(cfg: &ExperimentConfig, job: &Job, data: Option<&SparseDataset>, out: &Path) -> anyhow::Result<RunSummary> {
    let prep = prepare(cfg, job, data)?;
    let start = Instant::now();
    let problem = &prep.instance.problem;
    let result = match &prep.resolved {
        Resolved::Icgm(sc) => run_icgm(problem, &prep.instance.constants, &prep.cost, sc, &prep.x0).map(|o| o.trace),
        Resolved::Baseline(bc) => run_baseline(problem, &prep.cost, bc, &prep.x0).map(|o| o.trace),
    };
    let runtime_ms = start.elapsed().as_millis() as u64;
    let (trace, diverged) = match result {
        Ok(t) => (t, false),
        Err(SimError::Divergence { iteration, reason, trace }) => {
            warn!("{} diverged at iteration {iteration}: {reason}", job.stem());
            (*trace, true)
        }
        Err(e) => return Err(e).with_context(|| format!("run {}", job.stem())),
    };
    let stem = job.stem();
    write_trace(&out.join(format!("{stem}.csv")), &trace)?;
    let last = trace.last();
    let summary = RunSummary {
        algo: job.algo.name.clone(),
        seed: job.seed,
        sweep: job.sweep_label(),
        total_comm: last.map_or(0.0, |r| *r.cum_comm.numer() as f64 / *r.cum_comm.denom() as f64),
        total_local: last.map_or(0, |r| r.cum_local),
        min_grad_norm_sq: trace.min_grad_norm_sq(),
        final_f: last.map(|r| r.f_value).filter(|v| v.is_finite()),
        diverged,
        runtime_ms,
    };
    let f = File::create(out.join(format!("{stem}.json")))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &summary)?;
    Ok(summary)
}

/// Runs every job of `cfg` on `workers` threads and writes `summary.json` listing
/// all runs in job order.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> anyhow::Result<Vec<RunSummary>> {
    cfg.validate()?;
    let data = load_data(&cfg.problem)?;
    let out: PathBuf = cfg.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let jobs = expand_jobs(cfg);
    info!("{} runs on {workers} workers into {}", jobs.len(), out.display());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let results: Vec<anyhow::Result<RunSummary>> =
        pool.install(|| jobs.par_iter().map(|j| run_job(cfg, j, data.as_ref(), &out)).collect());
    let summaries = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let f = File::create(out.join("summary.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &summaries)?;
    Ok(summaries)
}
