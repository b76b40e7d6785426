use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::local::{solve_subproblem, ContractStats, LocalSolver};
use crate::cost::{CostConfig, CostLedger, CostTotals};
use crate::error::{check_dim, Result, SimError};
use crate::estimators::{
    rg_saga_round, rg_svrg_round, subset_gradients, svrg_init, EstimatorKind, Inner, RgState, SagaState,
};
use crate::linalg::{all_finite, dist_sq, norm_sq};
use crate::problems::{ProblemInstance, SimilarityConstants};
use crate::rng::{stream_rng, SimRng, ALGORITHM_STREAM, OUTPUT_STREAM};
use crate::trace::{RunTrace, TraceRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub estimator: EstimatorKind,
    pub beta: f64,
    pub p_b: f64,
    pub local_solver: LocalSolver,
    /// Smoothness constant used by the local steps; `L_1` when absent.
    pub local_smoothness: Option<f64>,
    pub t: u64,
    /// Target gradient norm; only used when `early_stop` is set.
    pub epsilon: f64,
    pub early_stop: bool,
    pub seed: u64,
    /// Number of full gradients computed before the SAGA recursion (0, 1 or 2).
    pub init_mode: u8,
    pub diagnostics: bool,
    /// Measure the local-solver contracts on every step.
    pub check_contracts: bool,
    pub keep_iterates: bool,
}

impl SolverConfig {
    pub fn new(estimator: EstimatorKind, lambda: f64, beta: f64, local_solver: LocalSolver, t: u64, seed: u64) -> Self {
        Self {
            lambda,
            estimator,
            beta,
            p_b: beta,
            local_solver,
            local_smoothness: None,
            t,
            epsilon: 0.0,
            early_stop: false,
            seed,
            init_mode: 2,
            diagnostics: true,
            check_contracts: false,
            keep_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if matches!(self.estimator, EstimatorKind::RgSvrg | EstimatorKind::SvrgDirect)
            && !(self.p_b > 0.0 && self.p_b <= 1.0)
        {
            return bad(format!("p_B must lie in (0, 1], got {}", self.p_b));
        }
        if self.init_mode > 2 {
            return bad(format!("init mode must be 0, 1 or 2, got {}", self.init_mode));
        }
        if let Some(l) = self.local_smoothness {
            if !(l > 0.0) {
                return bad(format!("local smoothness must be positive, got {l}"));
            }
        }
        self.local_solver.validate()
    }

    pub fn algo_name(&self) -> String {
        format!("icgm-{}", self.estimator)
    }
}

/// Exact quantities at `x^t`, measured outside the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterDiag {
    /// `||grad f(x^t)||^2`
    pub grad_norm_sq: f64,
    /// `||G^t - grad f(x^t)||^2` for the inner estimate; `NaN` if none was formed.
    pub sigma_sq: f64,
    /// `||g^t - grad f(x^t)||^2` for the estimate handed to the delegate.
    pub big_sigma_sq: f64,
    /// `||x^t - x^{t-1}||^2`; `NaN` at `t = 0`.
    pub chi_sq: f64,
}

impl IterDiag {
    fn blank() -> Self {
        Self { grad_norm_sq: f64::NAN, sigma_sq: f64::NAN, big_sigma_sq: f64::NAN, chi_sq: f64::NAN }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    /// `x^{t+1}` of a uniformly drawn `t`, the reported point.
    pub output: Vec<f64>,
    pub output_index: usize,
    pub last: Vec<f64>,
    pub totals: CostTotals,
    pub diagnostics: Vec<IterDiag>,
    pub contracts: Option<ContractStats>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

enum Estimator {
    Recursive(RgState),
    Saga(SagaState),
    Svrg(crate::estimators::SvrgState),
}

struct Run<'a> {
    problem: &'a ProblemInstance,
    cfg: &'a SolverConfig,
    ledger: CostLedger,
    rng: SimRng,
    trace: RunTrace,
    diags: Vec<IterDiag>,
    iterates: Option<Vec<Vec<f64>>>,
    contracts: Option<ContractStats>,
}

impl Run<'_> {
    fn fail(&self, iteration: usize, reason: String) -> SimError {
        SimError::Divergence { iteration, reason, trace: Box::new(self.trace.clone()) }
    }

    /// Appends the row for `x^t`. The estimate error is filled in by `set_estimate`.
    fn record(&mut self, t: usize, x: &[f64], prev: Option<&[f64]>, e_t: f64, steps: u64) {
        let grad = self.problem.full_gradient_unchecked(x);
        let grad_norm_sq = norm_sq(&grad);
        let f_value = if self.cfg.diagnostics { self.problem.full_objective(x).unwrap_or(f64::NAN) } else { f64::NAN };
        self.trace.push(TraceRow {
            round: t,
            cum_comm: self.ledger.communication(),
            cum_local: self.ledger.local(),
            grad_norm_sq,
            f_value,
            e_t,
            sigma_hat_sq: f64::NAN,
            local_steps: steps,
            n_a: self.ledger.n_a(),
            n_r: self.ledger.n_r(),
            n_d: self.ledger.n_d(),
        });
        let mut diag = IterDiag::blank();
        diag.grad_norm_sq = grad_norm_sq;
        if let Some(p) = prev {
            diag.chi_sq = dist_sq(x, p);
        }
        self.diags.push(diag);
        if let Some(it) = self.iterates.as_mut() {
            it.push(x.to_vec());
        }
    }

    /// Errors of the estimates attached to `x^t`.
    fn set_estimate(&mut self, t: usize, x: &[f64], g: &[f64], inner: Option<&[f64]>) {
        if !self.cfg.diagnostics {
            return;
        }
        let grad = self.problem.full_gradient_unchecked(x);
        let big = dist_sq(g, &grad);
        self.trace.rows[t].sigma_hat_sq = big;
        self.diags[t].big_sigma_sq = big;
        if let Some(inner) = inner {
            self.diags[t].sigma_sq = dist_sq(inner, &grad);
        }
    }

    fn local_solve(&mut self, x: &[f64], g: &[f64], l: f64) -> Result<super::local::LocalOutcome> {
        let delegate = self.ledger.config().delegate[0];
        let mut h = self.ledger.select_delegate();
        let out = solve_subproblem(
            self.problem,
            delegate,
            self.cfg.local_solver,
            self.cfg.lambda,
            l,
            x,
            g,
            &mut self.rng,
            &mut h,
            self.cfg.check_contracts,
        );
        self.ledger.close_round(h);
        let out = out?;
        if let (Some(acc), Some(st)) = (self.contracts.as_mut(), out.contracts.as_ref()) {
            acc.merge(st);
            acc.outer_monotone &= st.outer_monotone;
            acc.outer_monotone_strict &= st.outer_monotone_strict;
        }
        Ok(out)
    }

    fn reached(&self) -> bool {
        self.cfg.early_stop
            && self.trace.last().is_some_and(|r| r.grad_norm_sq <= self.cfg.epsilon * self.cfg.epsilon)
    }
}

/// Runs I-CGM from `x0` for `config.t` outer iterations.
pub fn run_icgm(
    problem: &ProblemInstance,
    constants: &SimilarityConstants,
    cost: &CostConfig,
    config: &SolverConfig,
    x0: &[f64],
) -> Result<RunOutput> {
    config.validate()?;
    check_dim(x0, problem.dim())?;
    let mut warnings = Vec::new();
    if config.lambda <= constants.delta1 {
        let msg = format!("lambda = {} does not exceed Delta_1 = {}", config.lambda, constants.delta1);
        warn!("{msg}");
        warnings.push(msg);
    }
    let l = config.local_smoothness.unwrap_or(constants.l1);
    let mut run = Run {
        problem,
        cfg: config,
        ledger: CostLedger::new(cost.clone(), problem.n())?,
        rng: stream_rng(config.seed, ALGORITHM_STREAM),
        trace: RunTrace::new(config.algo_name(), config.seed),
        diags: Vec::new(),
        iterates: config.keep_iterates.then(Vec::new),
        contracts: config.check_contracts.then(|| ContractStats {
            outer_monotone: true,
            outer_monotone_strict: true,
            ..ContractStats::default()
        }),
    };
    let mut out_rng = stream_rng(config.seed, OUTPUT_STREAM);
    let d = problem.dim();

    // Initialization and the estimate at x^0.
    let mut est = match config.estimator {
        EstimatorKind::RgSaga | EstimatorKind::SagaDirect => {
            let saga = if config.init_mode == 0 {
                let (s, mut h) = run.ledger.select_random(&mut run.rng);
                h.record_all(1);
                run.ledger.close_round(h);
                SagaState::from_subset(problem.n(), &s, &subset_gradients(problem, &s, x0))
            } else {
                SagaState::synced(problem, x0, &mut run.ledger)?
            };
            if config.estimator == EstimatorKind::RgSaga {
                Estimator::Recursive(RgState::new(saga.aggregate.clone(), config.beta, Inner::Saga(saga))?)
            } else {
                Estimator::Saga(saga)
            }
        }
        EstimatorKind::RgSvrg => {
            let svrg = svrg_init(problem, x0, config.p_b, &mut run.ledger)?;
            Estimator::Recursive(RgState::new(svrg.anchor_grad.clone(), config.beta, Inner::Svrg(svrg))?)
        }
        EstimatorKind::SvrgDirect => Estimator::Svrg(svrg_init(problem, x0, config.p_b, &mut run.ledger)?),
    };

    let mut x = x0.to_vec();
    run.record(0, &x, None, f64::NAN, 0);
    let mut output = x.clone();
    let mut output_index = 0usize;

    for t in 0..config.t as usize {
        if run.reached() {
            break;
        }
        // Estimate at x^t for the direct estimators; the recursive one already holds g^t.
        let g: Vec<f64> = match &mut est {
            Estimator::Recursive(rg) => rg.g.clone(),
            Estimator::Saga(saga) => {
                let g = if saga.has_exact() {
                    saga.step_with(&[], &[])
                } else {
                    let (s, mut h) = run.ledger.select_random(&mut run.rng);
                    let r = saga.step(problem, &x, &s, &mut h);
                    run.ledger.close_round(h);
                    r?
                };
                run.set_estimate(t, &x, &g, Some(&g));
                g
            }
            Estimator::Svrg(svrg) => {
                let g = if t == 0 {
                    svrg.anchor_grad.clone()
                } else if svrg.draw_refresh(&mut run.rng) {
                    svrg.refresh(problem, &x, &mut run.ledger)?;
                    svrg.anchor_grad.clone()
                } else {
                    let (s, mut h) = run.ledger.select_random(&mut run.rng);
                    h.record_all(2);
                    run.ledger.close_round(h);
                    svrg.estimate_at(problem, &x, &s)
                };
                run.set_estimate(t, &x, &g, Some(&g));
                g
            }
        };
        if !all_finite(&g) {
            return Err(run.fail(t, "non-finite gradient estimate".into()));
        }
        if t == 0 {
            if let Estimator::Recursive(rg) = &est {
                let g0 = rg.g.clone();
                run.set_estimate(0, &x, &g0, None);
            }
        }

        let local = run.local_solve(&x, &g, l)?;
        let x_next = local.x_next;
        if !all_finite(&x_next) {
            return Err(run.fail(t, "non-finite iterate".into()));
        }

        if let Estimator::Recursive(rg) = &mut est {
            let (s, mut h) = run.ledger.select_random(&mut run.rng);
            let r = if matches!(rg.inner, Inner::Saga(_)) {
                rg_saga_round(rg, problem, &x, &x_next, &s, &mut h)
            } else {
                rg_svrg_round(rg, problem, &x, &x_next, &s, &mut run.rng, &mut run.ledger, &mut h)
            };
            run.ledger.close_round(h);
            r?;
            let inner = rg.last_inner.clone().unwrap_or_else(|| vec![f64::NAN; d]);
            if config.diagnostics {
                let grad = problem.full_gradient_unchecked(&x);
                run.diags[t].sigma_sq = dist_sq(&inner, &grad);
            }
        }
        if t == 0 && config.init_mode == 2 {
            match &mut est {
                Estimator::Recursive(RgState { inner: Inner::Saga(saga), .. }) | Estimator::Saga(saga) => {
                    saga.sync(problem, &x_next, &mut run.ledger)?;
                }
                _ => {}
            }
        }

        let prev = std::mem::replace(&mut x, x_next);
        run.record(t + 1, &x, Some(&prev), local.e_t, local.steps);
        if let Estimator::Recursive(rg) = &est {
            if !all_finite(&rg.g) {
                return Err(run.fail(t + 1, "non-finite gradient estimate".into()));
            }
            let g_next = rg.g.clone();
            run.set_estimate(t + 1, &x, &g_next, None);
        }

        // Reservoir draw of the reported iterate among x^1..x^{t+1}.
        if out_rng.random_range(0..=t) == 0 {
            output.clone_from(&x);
            output_index = t + 1;
        }
    }

    let totals = run.ledger.totals()?;
    Ok(RunOutput {
        trace: run.trace,
        output,
        output_index,
        last: x,
        totals,
        diagnostics: run.diags,
        contracts: run.contracts,
        iterates: run.iterates,
        warnings,
    })
}
