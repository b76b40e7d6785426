//! Brute-force and statistical oracles for the estimator identities and bounds.
//!
//! Subset expectations are computed by enumerating every subset, never through the
//! sampler. Statistical checks average over seeded runs and report standard errors.

use std::io::Write;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostConfig, CostLedger};
use crate::error::{Result, SimError};
use crate::estimators::{rg_saga_round, rg_step, EstimatorKind, Inner, RgState, SagaState, SvrgState};
use crate::linalg::{dist_sq, mean_of, norm_sq};
use crate::problems::quadratic::{QuadLogSumInstance, QuadLogSumParams};
use crate::problems::{ProblemInstance, SeparableQuadratic, SimilarityConstants};
use crate::rng::{seeded, stream_rng, SimRng};
use crate::sampling::sample_geometric;
use crate::solver::{cgm_rand, default_params_rg_saga, experiment_params, run_icgm, LocalSolver, SolverConfig};

/// Largest `n` accepted by the enumeration oracles.
pub const MAX_ENUM_N: usize = 12;

/// Tolerance for the enumeration identities.
pub const ENUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub observed: f64,
    pub reference: f64,
    /// Standard error of `observed`; 0 for exact checks.
    pub stderr: f64,
    pub pass: bool,
    pub samples: u64,
    pub seed: u64,
    pub detail: String,
}

impl OracleReport {
    fn exact(name: impl Into<String>, observed: f64, reference: f64, pass: bool, samples: u64, seed: u64) -> Self {
        Self { name: name.into(), observed, reference, stderr: 0.0, pass, samples, seed, detail: String::new() }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

pub fn write_reports_csv<W: Write>(reports: &[OracleReport], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in reports {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn check_enum_size(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 || m > n {
        return Err(SimError::InvalidInput(format!("need 1 <= m <= n, got n = {n}, m = {m}")));
    }
    if n > MAX_ENUM_N {
        return Err(SimError::InvalidInput(format!("enumeration needs n <= {MAX_ENUM_N}, got {n}")));
    }
    Ok(())
}

/// Exact moments of the subset mean over all `C(n, m)` subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetMoments {
    /// Average of the subset means.
    pub mean: Vec<f64>,
    /// Average of `||mean_S - mean||^2`.
    pub deviation: f64,
    /// `q_m sigma^2 / m` with `sigma^2 = (1/n) sum ||g_i - mean||^2`.
    pub formula: f64,
    pub subsets: u64,
}

pub fn enumerate_subset_mean(vectors: &[Vec<f64>], m: usize) -> Result<SubsetMoments> {
    let n = vectors.len();
    check_enum_size(n, m)?;
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(SimError::InvalidInput("vectors of different lengths".into()));
    }
    let full = mean_of(vectors.iter().map(Vec::as_slice), d);
    let mut acc = vec![0.0; d];
    let mut dev = 0.0;
    let mut count = 0u64;
    for s in (0..n).combinations(m) {
        let ms = mean_of(s.iter().map(|&i| vectors[i].as_slice()), d);
        for k in 0..d {
            acc[k] += ms[k];
        }
        dev += dist_sq(&ms, &full);
        count += 1;
    }
    let c = count as f64;
    let sigma_sq = vectors.iter().map(|v| dist_sq(v, &full)).sum::<f64>() / n as f64;
    Ok(SubsetMoments {
        mean: acc.into_iter().map(|v| v / c).collect(),
        deviation: dev / c,
        formula: SimilarityConstants::q_m(n, m) / m as f64 * sigma_sq,
        subsets: count,
    })
}

/// Estimators checked by [`check_conditional_unbiasedness`]. `Sag` uses the
/// refreshed aggregate itself as the estimate and is expected to fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnbiasednessTarget {
    Saga,
    Svrg,
    RgSaga,
    RgSvrg,
    Sag,
}

impl UnbiasednessTarget {
    pub const ALL: [UnbiasednessTarget; 5] = [Self::Saga, Self::Svrg, Self::RgSaga, Self::RgSvrg, Self::Sag];

    pub fn name(self) -> &'static str {
        match self {
            Self::Saga => "saga",
            Self::Svrg => "svrg",
            Self::RgSaga => "rg-saga",
            Self::RgSvrg => "rg-svrg",
            Self::Sag => "sag",
        }
    }
}

fn uniform_vec(rng: &mut SimRng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

/// Heterogeneous separable quadratics with a log-sum penalty.
pub fn random_instance(n: usize, d: usize, seed: u64) -> Result<ProblemInstance> {
    let mut rng = seeded(seed);
    let clients = (0..n)
        .map(|_| {
            SeparableQuadratic::new(uniform_vec(&mut rng, d, 0.5, 4.0), uniform_vec(&mut rng, d, -2.0, 2.0))
                .with_log_penalty(1.5)
        })
        .collect();
    ProblemInstance::from_clients(format!("random-{n}x{d}"), clients)
}

/// Two scalar clients `f_{1,2}(x) = (L +/- s) x^2 / 2`.
pub fn sag_instance(l: f64, s: f64) -> Result<ProblemInstance> {
    ProblemInstance::from_clients(
        "sag-pair",
        vec![SeparableQuadratic::new(vec![l + s], vec![0.0]), SeparableQuadratic::new(vec![l - s], vec![0.0])],
    )
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |g, (x, y)| g.max((x - y).abs())) / scale
}

/// Averages the estimate over every subset of size `m` and compares with its
/// conditional expectation. The state (table, anchor, previous estimate, points)
/// is drawn from `seed`.
pub fn check_conditional_unbiasedness(
    target: UnbiasednessTarget,
    problem: &ProblemInstance,
    m: usize,
    seed: u64,
) -> Result<OracleReport> {
    let n = problem.n();
    let d = problem.dim();
    check_enum_size(n, m)?;
    let mut rng = seeded(seed);
    let point = |rng: &mut SimRng| uniform_vec(rng, d, -3.0, 3.0);
    let x = point(&mut rng);
    let x_next = point(&mut rng);
    let table: Vec<Vec<f64>> = (0..n).map(|i| problem.grad(i, &point(&mut rng))).collect();
    let anchor = point(&mut rng);
    let g_prev = point(&mut rng);
    let beta = 0.3;

    let grad_x = problem.full_gradient(&x)?;
    let grad_next = problem.full_gradient(&x_next)?;
    let grads_x = problem.client_gradients(&x)?;
    let grads_w = problem.client_gradients(&anchor)?;
    let pick = |all: &[Vec<f64>], s: &[usize]| -> Vec<Vec<f64>> { s.iter().map(|&i| all[i].clone()).collect() };

    let reference: Vec<f64> = match target {
        UnbiasednessTarget::RgSaga | UnbiasednessTarget::RgSvrg => (0..d)
            .map(|k| (1.0 - beta) * g_prev[k] + beta * grad_x[k] + grad_next[k] - grad_x[k])
            .collect(),
        _ => grad_x.clone(),
    };

    let saga = SagaState::from_table(table)?;
    let svrg = SvrgState::at(problem, &anchor, 0.5)?;
    let cost = CostConfig::unit(m);
    let mut acc = vec![0.0; d];
    let mut count = 0u64;
    for s in (0..n).combinations(m) {
        let est = match target {
            UnbiasednessTarget::Saga => saga.estimate(&s, &pick(&grads_x, &s)),
            UnbiasednessTarget::Sag => {
                let mut st = saga.clone();
                st.apply(&s, &pick(&grads_x, &s));
                st.aggregate
            }
            UnbiasednessTarget::Svrg => svrg.estimate(&pick(&grads_x, &s), &pick(&grads_w, &s)),
            UnbiasednessTarget::RgSaga => {
                let mut st = RgState::new(g_prev.clone(), beta, Inner::Saga(saga.clone()))?;
                let mut ledger = CostLedger::new(cost.clone(), n)?;
                let mut h = ledger.select_arbitrary(&s)?;
                let g = rg_saga_round(&mut st, problem, &x, &x_next, &s, &mut h);
                ledger.close_round(h);
                g?
            }
            UnbiasednessTarget::RgSvrg => {
                let big_g = svrg.estimate(&pick(&grads_x, &s), &pick(&grads_w, &s));
                let next = mean_of(s.iter().map(|&i| problem.grad(i, &x_next)).collect_vec().iter().map(Vec::as_slice), d);
                let curr = mean_of(s.iter().map(|&i| grads_x[i].as_slice()), d);
                let mut st = RgState::new(g_prev.clone(), beta, Inner::Svrg(svrg.clone()))?;
                rg_step(&mut st, &big_g, &next, &curr)?
            }
        };
        for k in 0..d {
            acc[k] += est[k];
        }
        count += 1;
    }
    let mean: Vec<f64> = acc.into_iter().map(|v| v / count as f64).collect();
    let gap = relative_gap(&mean, &reference);
    Ok(OracleReport::exact(
        format!("unbiased/{}/n={n}/m={m}", target.name()),
        gap,
        ENUM_TOL,
        gap <= ENUM_TOL,
        count,
        seed,
    ))
}

/// Two-client SAG/SAGA comparison at `t = 1` with `b_i^0 = grad f_i(x0)`.
/// Returns the enumerated errors checked against both closed forms and the
/// ordering `SAG >= 10 SAGA`.
pub fn sag_counterexample_on(problem: &ProblemInstance, x0: &[f64], x1: &[f64]) -> Result<Vec<OracleReport>> {
    if problem.n() != 2 {
        return Err(SimError::InvalidInput("the SAG comparison needs two clients".into()));
    }
    let d = problem.dim();
    let g0 = problem.client_gradients(x0)?;
    let g1 = problem.client_gradients(x1)?;
    let full1 = problem.full_gradient(x1)?;
    let saga = SagaState::from_table(g0.clone())?;

    let (mut sag_err, mut saga_err) = (0.0, 0.0);
    for i in 0..2 {
        let s = [i];
        let fresh = [g1[i].clone()];
        let mut sag = saga.clone();
        sag.apply(&s, &fresh);
        sag_err += 0.5 * dist_sq(&sag.aggregate, &full1);
        saga_err += 0.5 * dist_sq(&saga.estimate(&s, &fresh), &full1);
    }

    // Closed forms from raw client queries; h_i = f - f_i.
    let full0 = problem.full_gradient(x0)?;
    let sag_closed = 0.125 * (0..2).map(|i| dist_sq(&g0[i], &g1[i])).sum::<f64>();
    let saga_closed = 0.5
        * (0..2)
            .map(|i| {
                let dh: Vec<f64> = (0..d).map(|k| (full0[k] - g0[i][k]) - (full1[k] - g1[i][k])).collect();
                norm_sq(&dh)
            })
            .sum::<f64>();

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let ratio = if saga_err > 0.0 { sag_err / saga_err } else { f64::INFINITY };
    Ok(vec![
        OracleReport::exact("sag/closed-form", sag_err, sag_closed, close(sag_err, sag_closed), 2, 0),
        OracleReport::exact("saga/closed-form", saga_err, saga_closed, close(saga_err, saga_closed), 2, 0),
        OracleReport::exact("sag/exceeds-saga", ratio, 10.0, sag_err > 0.0 && ratio >= 10.0, 2, 0)
            .with_detail(format!("sag error {sag_err:e}, saga error {saga_err:e}")),
    ])
}

/// The comparison on `f_{1,2} = (10 +/- 1) x^2 / 2` between `x0 = 2` and `x1 = 0.5`.
pub fn sag_counterexample() -> Result<Vec<OracleReport>> {
    let mut reports = sag_counterexample_on(&sag_instance(10.0, 1.0)?, &[2.0], &[0.5])?;
    // The SAG aggregate is also biased on this instance.
    let mut control = check_conditional_unbiasedness(UnbiasednessTarget::Sag, &sag_instance(10.0, 1.0)?, 1, 0)?;
    control.name = "sag/biased".into();
    control.pass = !control.pass;
    reports.push(control.with_detail("pass means the aggregate is biased"));
    Ok(reports)
}

/// Mean of `draws` geometric samples against `1/p - 1`, and the frequency of zero
/// against `p`, both within three standard errors.
pub fn check_geometric_sampler(p: f64, draws: u64, seed: u64) -> Result<OracleReport> {
    if draws == 0 {
        return Err(SimError::InvalidInput("need at least one draw".into()));
    }
    let mut rng = seeded(seed);
    let (mut sum, mut sum_sq, mut zeros) = (0.0, 0.0, 0u64);
    for _ in 0..draws {
        let k = sample_geometric(p, &mut rng)? as f64;
        sum += k;
        sum_sq += k * k;
        zeros += u64::from(k == 0.0);
    }
    let nd = draws as f64;
    let mean = sum / nd;
    let var = if draws > 1 { ((sum_sq - nd * mean * mean) / (nd - 1.0)).max(0.0) } else { 0.0 };
    let se = (var / nd).sqrt();
    let expected = 1.0 / p - 1.0;
    let zero_freq = zeros as f64 / nd;
    let zero_se = (p * (1.0 - p) / nd).sqrt();
    let pass = (mean - expected).abs() <= 3.0 * se + 1e-12 && (zero_freq - p).abs() <= 3.0 * zero_se + 1e-12;
    Ok(OracleReport { stderr: se, ..OracleReport::exact(format!("geometric/p={p}"), mean, expected, pass, draws, seed) }
        .with_detail(format!("P(K=0) = {zero_freq} vs {p}")))
}

/// Average queries of the geometric local solver over `iterations` independent
/// solves, against `1/p` within 5%.
pub fn check_geometric_queries(p: f64, iterations: u64, seed: u64) -> Result<OracleReport> {
    let problem = random_instance(2, 3, seed)?;
    let mut ledger = CostLedger::new(CostConfig::unit(1), problem.n())?;
    let mut rng = seeded(seed);
    let x = vec![1.0; 3];
    let g = problem.full_gradient(&x)?;
    let mut total = 0u64;
    for _ in 0..iterations {
        let mut h = ledger.select_delegate();
        let out = cgm_rand(&problem, 10.0, p, 20.0, &x, &g, &mut rng, &mut h);
        ledger.close_round(h);
        total += out?.queries;
    }
    let mean = total as f64 / iterations.max(1) as f64;
    let expected = 1.0 / p;
    Ok(OracleReport::exact(
        format!("geometric-queries/p={p}"),
        mean,
        expected,
        (mean - expected).abs() <= 0.05 * expected,
        iterations,
        seed,
    )
    .with_detail(format!("ledger local cost {}", ledger.local())))
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Setup of [`check_variance_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarianceCheckConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub runs: u64,
    /// Last index `T` of the sums.
    pub t: u64,
    pub instance_seed: u64,
    pub seed: u64,
    /// Defaults to the experiment choice.
    pub lambda: Option<f64>,
    /// Refresh probabilities for the loopless SVRG checks.
    pub p_b: Vec<f64>,
}

impl Default for VarianceCheckConfig {
    fn default() -> Self {
        Self { n: 16, m: 4, d: 10, runs: 200, t: 40, instance_seed: 3, seed: 1000, lambda: None, p_b: vec![0.25, 0.5, 1.0] }
    }
}

struct Sums {
    lhs: Vec<f64>,
    rhs: Vec<f64>,
}

impl Sums {
    fn new() -> Self {
        Self { lhs: Vec::new(), rhs: Vec::new() }
    }

    fn report(&self, name: String, cfg: &VarianceCheckConfig, diverged: u64) -> OracleReport {
        let (l, se) = mean_se(&self.lhs);
        let (r, r_se) = mean_se(&self.rhs);
        OracleReport {
            name,
            observed: l,
            reference: r,
            stderr: se,
            pass: diverged == 0 && !self.lhs.is_empty() && l <= r,
            samples: self.lhs.len() as u64,
            seed: cfg.seed,
            detail: format!("rhs stderr {r_se:e}; diverged runs {diverged}"),
        }
    }
}

fn sum_range(v: impl Iterator<Item = f64>) -> f64 {
    v.sum()
}

/// Seeded trajectories of the direct and recursive estimators on a fixed quadratic
/// instance, with every bound evaluated per run and compared after averaging.
/// The last report is the paired comparison of the recursive SAGA error against
/// the direct SAGA error with `beta = 1 / (4 n/m)`.
pub fn check_variance_bounds(cfg: &VarianceCheckConfig) -> Result<Vec<OracleReport>> {
    let (n, m) = (cfg.n, cfg.m);
    if cfg.runs == 0 || cfg.t < 2 {
        return Err(SimError::InvalidConfig("need at least one run and T >= 2".into()));
    }
    let inst = QuadLogSumInstance::generate(&QuadLogSumParams::desk(n, cfg.d), cfg.instance_seed)?;
    let problem = &inst.problem;
    let c = inst.constants;
    let lmax = c.lmax.unwrap_or(c.l1);
    let exp = experiment_params(c.delta, c.delta1, lmax, n, m)?;
    let lambda = cfg.lambda.unwrap_or(exp.lambda);
    let cost = CostConfig::unit(m);
    let x0 = vec![10.0; cfg.d];
    let t = cfg.t as usize;

    let n_m = SimilarityConstants::n_m(n, m);
    let q_m = SimilarityConstants::q_m(n, m);
    let dm2 = c.delta_m_sq(n, m);
    let mf = m as f64;
    let g_coef = if n > 1 { (n_m - 1.0 + (n_m * n_m - n_m).sqrt()) / (n as f64 - 1.0) } else { 0.0 };
    let beta_pair = (1.0 / (4.0 * n_m)).min(1.0);

    let base = |est: EstimatorKind, beta: f64, p_b: f64, steps: u64, seed: u64| {
        let mut sc = SolverConfig::new(est, lambda, beta, LocalSolver::Geometric { p: exp.p }, steps, seed);
        sc.p_b = p_b;
        sc.local_smoothness = Some(exp.eta);
        sc
    };
    let run = |sc: &SolverConfig| run_icgm(problem, &c, &cost, sc, &x0).map(|o| o.diagnostics);

    let mut saga_sums = Sums::new();
    let mut svrg_sums: Vec<Sums> = cfg.p_b.iter().map(|_| Sums::new()).collect();
    let mut rg_saga_sums = Sums::new();
    let mut cor2 = Sums::new();
    let mut rg_svrg_sums = Sums::new();
    let mut cor3 = Sums::new();
    let mut paired_better = 0u64;
    let mut paired = 0u64;
    let mut diverged = 0u64;
    let svrg_pb = SimilarityConstants::n_m(m, n).min(1.0);

    for r in 0..cfg.runs {
        let seed = cfg.seed.wrapping_add(r);

        // Direct SAGA: sigma_t for t <= T needs T + 1 outer iterations.
        let saga = match run(&base(EstimatorKind::SagaDirect, 1.0, 1.0, cfg.t + 1, seed)) {
            Ok(d) => Some(d),
            Err(SimError::Divergence { .. }) => {
                diverged += 1;
                None
            }
            Err(e) => return Err(e),
        };
        if let Some(dg) = &saga {
            let lhs = sum_range((0..=t).map(|i| dg[i].sigma_sq));
            let rhs = 2.0 * n_m * q_m / mf * dg[1].grad_norm_sq
                + g_coef * sum_range((2..t).map(|i| dg[i].grad_norm_sq))
                + 4.0 * n_m * n_m * dm2 * sum_range((2..=t).map(|i| dg[i].chi_sq));
            saga_sums.lhs.push(lhs);
            saga_sums.rhs.push(rhs);
        }

        for (sums, &p_b) in svrg_sums.iter_mut().zip(&cfg.p_b) {
            match run(&base(EstimatorKind::SvrgDirect, 1.0, p_b, cfg.t + 1, seed)) {
                Ok(dg) => {
                    sums.lhs.push(sum_range((0..=t).map(|i| dg[i].sigma_sq)));
                    sums.rhs.push(4.0 * dm2 / (p_b * p_b) * sum_range((1..=t).map(|i| dg[i].chi_sq)));
                }
                Err(SimError::Divergence { .. }) => diverged += 1,
                Err(e) => return Err(e),
            }
        }

        let b = beta_pair;
        let chi_coef = 2.0 * dm2 / (2.0 * b - b * b);
        match run(&base(EstimatorKind::RgSaga, b, 1.0, cfg.t, seed)) {
            Ok(dg) => {
                let lhs = sum_range((0..=t).map(|i| dg[i].big_sigma_sq));
                let chi = sum_range((1..=t).map(|i| dg[i].chi_sq));
                rg_saga_sums.lhs.push(lhs);
                rg_saga_sums.rhs.push(2.0 * b / (2.0 - b) * sum_range((0..t).map(|i| dg[i].sigma_sq)) + chi_coef * chi);
                cor2.lhs.push(lhs);
                cor2.rhs.push(
                    4.0 * b * n_m * q_m / ((2.0 - b) * mf) * dg[1].grad_norm_sq
                        + 2.0 * b * g_coef / (2.0 - b) * sum_range((2..t).map(|i| dg[i].grad_norm_sq))
                        + (8.0 * b * b * n_m * n_m * dm2 + 2.0 * dm2) / (2.0 * b - b * b) * chi,
                );
                if let Some(sg) = &saga {
                    paired += 1;
                    if lhs < sum_range((0..=t).map(|i| sg[i].sigma_sq)) {
                        paired_better += 1;
                    }
                }
            }
            Err(SimError::Divergence { .. }) => diverged += 1,
            Err(e) => return Err(e),
        }

        let b = svrg_pb;
        match run(&base(EstimatorKind::RgSvrg, b, svrg_pb, cfg.t, seed)) {
            Ok(dg) => {
                let lhs = sum_range((0..=t).map(|i| dg[i].big_sigma_sq));
                let chi = sum_range((1..=t).map(|i| dg[i].chi_sq));
                rg_svrg_sums.lhs.push(lhs);
                rg_svrg_sums.rhs.push(
                    2.0 * b / (2.0 - b) * sum_range((0..t).map(|i| dg[i].sigma_sq)) + 2.0 * dm2 / (2.0 * b - b * b) * chi,
                );
                cor3.lhs.push(lhs);
                cor3.rhs.push((8.0 * b * b * dm2 / (svrg_pb * svrg_pb) + 2.0 * dm2) / (2.0 * b - b * b) * chi);
            }
            Err(SimError::Divergence { .. }) => diverged += 1,
            Err(e) => return Err(e),
        }
    }

    let mut out = vec![saga_sums.report("bound/saga".into(), cfg, diverged)];
    for (sums, p_b) in svrg_sums.iter().zip(&cfg.p_b) {
        out.push(sums.report(format!("bound/svrg/p_b={p_b}"), cfg, diverged));
    }
    out.push(rg_saga_sums.report("bound/rg/saga-inner".into(), cfg, diverged));
    out.push(cor2.report("bound/rg-saga".into(), cfg, diverged));
    out.push(rg_svrg_sums.report("bound/rg/svrg-inner".into(), cfg, diverged));
    out.push(cor3.report("bound/rg-svrg".into(), cfg, diverged));
    let frac = if paired > 0 { paired_better as f64 / paired as f64 } else { 0.0 };
    out.push(
        OracleReport::exact("paired/rg-saga-below-saga", frac, 0.9, paired > 0 && frac >= 0.9, paired, cfg.seed)
            .with_detail(format!("beta = {beta_pair}; lambda = {lambda}")),
    );
    Ok(out)
}

/// Outcome of [`check_subproblem_contracts`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractCheck {
    /// Strict `F_t(x^{t+1}) <= F_t(x^t)` with no slack, per outer iteration.
    pub strict_monotone: OracleReport,
    /// Same with relative rounding slack.
    pub monotone: OracleReport,
    /// `||grad F_t(y_{k+1})|| <= 2 L ||y_{k+1} - y_k||` per local step.
    pub gradient_bound: OracleReport,
}

/// Runs RG-SAGA on the desk quadratic preset for `iterations` outer iterations per
/// seed with contract checking on.
pub fn check_subproblem_contracts(n: usize, d: usize, seeds: &[u64], iterations: u64) -> Result<ContractCheck> {
    let inst = QuadLogSumInstance::generate(&QuadLogSumParams::desk(n, d), 1)?;
    let c = inst.constants;
    let m = ((n as f64).sqrt().round() as usize).clamp(1, n);
    let lmax = c.lmax.unwrap_or(c.l1);
    let exp = experiment_params(c.delta, c.delta1, lmax, n, m)?;
    let cost = CostConfig::unit(m);
    let x0 = vec![10.0; d];
    let (mut strict_ok, mut slack_ok, mut outer) = (0u64, 0u64, 0u64);
    let (mut steps, mut viol, mut ratio) = (0u64, 0u64, 0.0f64);
    for &seed in seeds {
        let mut sc =
            SolverConfig::new(EstimatorKind::RgSaga, exp.lambda, exp.beta, LocalSolver::Geometric { p: exp.p }, iterations, seed);
        sc.local_smoothness = Some(exp.eta);
        sc.check_contracts = true;
        let st = run_icgm(&inst.problem, &c, &cost, &sc, &x0)?.contracts.expect("contracts requested");
        steps += st.steps;
        viol += st.gradient_violations + st.monotone_violations;
        ratio = ratio.max(st.max_gradient_ratio);
        outer += st.outer_iterations;
        strict_ok += st.outer_iterations - st.outer_strict_failures;
        slack_ok += st.outer_iterations - st.outer_failures;
    }
    let seed = seeds.first().copied().unwrap_or(0);
    Ok(ContractCheck {
        strict_monotone: OracleReport::exact("contract/monotone-strict", strict_ok as f64, outer as f64, strict_ok == outer, outer, seed),
        monotone: OracleReport::exact("contract/monotone", slack_ok as f64, outer as f64, slack_ok == outer, outer, seed),
        gradient_bound: OracleReport::exact("contract/gradient-bound", viol as f64, 0.0, viol == 0, steps, seed)
            .with_detail(format!("max ratio {ratio}")),
    })
}

/// Seed-averaged `||grad f(xbar^T)||^2` of RG-SAGA with the default theoretical
/// parameters against `256 (Delta_1 + 38 sqrt(n/m) delta_m) F0 / T`.
pub fn check_rate_envelope(n: usize, m: usize, d: usize, t: u64, seeds: &[u64]) -> Result<OracleReport> {
    let inst = QuadLogSumInstance::generate(&QuadLogSumParams::desk(n, d), 1)?;
    let c = inst.constants;
    let x0 = vec![10.0; d];
    let f0 = inst.problem.full_objective(&x0)? - inst.f_star;
    let params = default_params_rg_saga(c.delta1, c.delta, n, m, c.l1, f0, 1.0)?;
    let cost = CostConfig::unit(m);
    let mut vals = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut sc =
            SolverConfig::new(EstimatorKind::RgSaga, params.lambda, params.beta, LocalSolver::Geometric { p: params.p }, t, seed);
        sc.diagnostics = false;
        let out = run_icgm(&inst.problem, &c, &cost, &sc, &x0)?;
        vals.push(norm_sq(&inst.problem.full_gradient(&out.output)?));
    }
    let (mean, se) = mean_se(&vals);
    let envelope = 256.0 * (c.delta1 + 38.0 * SimilarityConstants::n_m(n, m).sqrt() * c.delta_m(n, m)) * f0 / t as f64;
    Ok(OracleReport {
        stderr: se,
        ..OracleReport::exact(format!("rate/T={t}"), mean, envelope, mean <= envelope, seeds.len() as u64, seeds[0])
    }
    .with_detail(format!("lambda {}, beta {}, p {}", params.lambda, params.beta, params.p)))
}

/// Fixed suite used by the command line `verify` subcommand.
pub fn run_suite(seed: u64, runs: u64) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    let mut rng = stream_rng(seed, 2);
    for n in [4usize, 6, 8] {
        let vectors: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut rng, 3, -5.0, 5.0)).collect();
        for m in 1..=n {
            let mo = enumerate_subset_mean(&vectors, m)?;
            let rel = (mo.deviation - mo.formula).abs() / mo.formula.abs().max(f64::MIN_POSITIVE);
            let pass = if mo.formula == 0.0 { mo.deviation.abs() < 1e-24 } else { rel <= 1e-12 };
            out.push(OracleReport::exact(format!("subset-variance/n={n}/m={m}"), mo.deviation, mo.formula, pass, mo.subsets, seed));
        }
    }
    for n in [4usize, 6, 8] {
        let problem = random_instance(n, 3, seed.wrapping_add(n as u64))?;
        for m in 1..n {
            for target in [UnbiasednessTarget::Saga, UnbiasednessTarget::Svrg, UnbiasednessTarget::RgSaga, UnbiasednessTarget::RgSvrg] {
                out.push(check_conditional_unbiasedness(target, &problem, m, seed)?);
            }
        }
    }
    out.extend(sag_counterexample()?);
    for p in [0.5, 0.1, 0.01] {
        out.push(check_geometric_sampler(p, 100_000, seed)?);
        out.push(check_geometric_queries(p, 10_000, seed)?);
    }
    out.extend(check_variance_bounds(&VarianceCheckConfig { runs, seed, ..VarianceCheckConfig::default() })?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_scalars_pairs() {
        let g: Vec<Vec<f64>> = (0..4).map(|v| vec![v as f64]).collect();
        let mo = enumerate_subset_mean(&g, 2).unwrap();
        assert_eq!(mo.subsets, 6);
        assert!((mo.deviation - 5.0 / 12.0).abs() < 1e-15);
        assert!((mo.formula - 5.0 / 12.0).abs() < 1e-15);
        assert!((mo.mean[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn full_and_single_subsets() {
        let g = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![4.0, 4.0]];
        assert_eq!(enumerate_subset_mean(&g, 3).unwrap().deviation, 0.0);
        let one = enumerate_subset_mean(&g, 1).unwrap();
        let full = mean_of(g.iter().map(Vec::as_slice), 2);
        let sigma = g.iter().map(|v| dist_sq(v, &full)).sum::<f64>() / 3.0;
        assert!((one.deviation - sigma).abs() < 1e-14);
    }

    #[test]
    fn enumeration_rejects_large_n() {
        let g = vec![vec![0.0]; MAX_ENUM_N + 1];
        assert!(enumerate_subset_mean(&g, 2).is_err());
    }

    #[test]
    fn estimators_are_conditionally_unbiased() {
        let problem = random_instance(5, 3, 9).unwrap();
        for target in [UnbiasednessTarget::Saga, UnbiasednessTarget::Svrg, UnbiasednessTarget::RgSaga, UnbiasednessTarget::RgSvrg] {
            for m in 1..5 {
                let r = check_conditional_unbiasedness(target, &problem, m, 4).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn sag_aggregate_is_biased_unless_all_clients_report() {
        let problem = random_instance(4, 2, 1).unwrap();
        assert!(!check_conditional_unbiasedness(UnbiasednessTarget::Sag, &problem, 2, 0).unwrap().pass);
        assert!(check_conditional_unbiasedness(UnbiasednessTarget::Sag, &problem, 4, 0).unwrap().pass);
    }

    #[test]
    fn sag_comparison_passes() {
        for r in sag_counterexample().unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn sag_pair_values_by_hand() {
        // L = 10, s = 1, x0 = 2, x1 = 0.5: D_i = (L +/- s) * 1.5, dh_i = s * 1.5.
        let r = sag_counterexample_on(&sag_instance(10.0, 1.0).unwrap(), &[2.0], &[0.5]).unwrap();
        let sag = (121.0 + 81.0) * 2.25 / 8.0;
        assert!((r[0].observed - sag).abs() < 1e-12);
        assert!((r[1].observed - 2.25).abs() < 1e-12);
    }

    #[test]
    fn identical_clients_only_saga_is_exact() {
        // The stale half of the aggregate still lags: (1/8) * 2 * (3 * 3)^2.
        let r = sag_counterexample_on(&sag_instance(3.0, 0.0).unwrap(), &[1.0], &[-2.0]).unwrap();
        assert!((r[0].observed - 20.25).abs() < 1e-12);
        assert_eq!(r[1].observed, 0.0);
        assert!(r[0].pass && r[1].pass && r[2].pass);
    }

    #[test]
    fn opposite_curvature_pair_reverses_the_ordering() {
        // f_1 = L x^2 / 2, f_2 = -L x^2 / 2 + c x: SAG error L^2 D^2 / 4, SAGA error L^2 D^2.
        let p = ProblemInstance::from_clients(
            "opposite",
            vec![SeparableQuadratic::new(vec![4.0], vec![0.0]), SeparableQuadratic::new(vec![-4.0], vec![-3.0])],
        )
        .unwrap();
        let r = sag_counterexample_on(&p, &[1.0], &[0.0]).unwrap();
        assert!((r[0].observed - 4.0).abs() < 1e-12);
        assert!((r[1].observed - 16.0).abs() < 1e-12);
        assert!(r[0].pass && r[1].pass && !r[2].pass);
    }

    #[test]
    fn geometric_sampler_checks() {
        let one = check_geometric_sampler(1.0, 1000, 0).unwrap();
        assert_eq!(one.observed, 0.0);
        assert!(one.pass);
        assert!(check_geometric_sampler(0.1, 100_000, 1).unwrap().pass);
        assert!(check_geometric_sampler(0.01, 100_000, 2).unwrap().pass);
        assert!(check_geometric_queries(0.1, 10_000, 3).unwrap().pass);
    }

    #[test]
    fn variance_bounds_small() {
        let cfg = VarianceCheckConfig { runs: 10, t: 15, ..VarianceCheckConfig::default() };
        let reports = check_variance_bounds(&cfg).unwrap();
        for r in &reports[..reports.len() - 1] {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn full_participation_errors_vanish() {
        let cfg = VarianceCheckConfig { n: 4, m: 4, runs: 3, t: 8, ..VarianceCheckConfig::default() };
        for r in check_variance_bounds(&cfg).unwrap().iter().filter(|r| r.name.starts_with("bound")) {
            assert!(r.observed < 1e-18, "{r:?}");
        }
    }

    #[test]
    fn reports_serialize_to_csv() {
        let mut buf = Vec::new();
        write_reports_csv(&sag_counterexample().unwrap(), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("name,observed,reference,stderr,pass,samples,seed,detail"));
        assert_eq!(s.lines().count(), 5);
    }
}
