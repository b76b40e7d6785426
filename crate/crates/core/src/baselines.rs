//! Reference methods, charged through the same ledger as I-CGM.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{CostConfig, CostLedger, CostTotals};
use crate::error::{check_dim, Result, SimError};
use crate::estimators::full_sync_gradient;
use crate::linalg::{all_finite, axpy, dist_sq, mean_of, norm_sq};
use crate::problems::ProblemInstance;
use crate::rng::{stream_rng, SimRng, ALGORITHM_STREAM};
use crate::sampling::sample_bernoulli;
use crate::solver::{solve_subproblem, LocalSolver};
use crate::trace::{RunTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Gd,
    FedAvg,
    Scaffold,
    FedRedGd,
    SaberFull,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [Self::Gd, Self::FedAvg, Self::Scaffold, Self::FedRedGd, Self::SaberFull];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::FedAvg => "fedavg",
            Self::Scaffold => "scaffold",
            Self::FedRedGd => "fedred-gd",
            Self::SaberFull => "saber-full",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::InvalidConfig(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub algo: BaselineKind,
    /// Gradient step size (GD, FedAvg, Scaffold).
    pub step: f64,
    /// Local steps per round (FedAvg, Scaffold).
    pub k: u64,
    /// Proximal weight (FedRed-GD, SABER-full).
    pub lambda: f64,
    /// FedRed-GD: anchor refresh probability. SABER-full: full refresh probability.
    pub p: f64,
    /// FedRed-GD regularization toward the previous iterate.
    pub eta: f64,
    /// SABER-full local solver and its step smoothness.
    pub local_solver: LocalSolver,
    pub local_smoothness: f64,
    pub t: u64,
    pub seed: u64,
    pub diagnostics: bool,
}

impl BaselineConfig {
    pub fn new(algo: BaselineKind, t: u64, seed: u64) -> Self {
        Self {
            algo,
            step: 0.003,
            k: 20,
            lambda: 1.0,
            p: 0.1,
            eta: 1.0,
            local_solver: LocalSolver::Geometric { p: 0.1 },
            local_smoothness: 1.0,
            t,
            seed,
            diagnostics: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step));
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        match self.algo {
            BaselineKind::FedRedGd | BaselineKind::SaberFull => {
                if !(self.p > 0.0 && self.p <= 1.0) {
                    return bad(format!("p must lie in (0, 1], got {}", self.p));
                }
                if !(self.lambda > 0.0) {
                    return bad(format!("lambda must be positive, got {}", self.lambda));
                }
            }
            _ => {}
        }
        if self.algo == BaselineKind::FedRedGd && !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.algo == BaselineKind::SaberFull {
            self.local_solver.validate()?;
            if !(self.local_smoothness > 0.0) {
                return bad("local smoothness must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub trace: RunTrace,
    pub last: Vec<f64>,
    pub totals: CostTotals,
}

struct Recorder<'a> {
    problem: &'a ProblemInstance,
    diagnostics: bool,
    trace: RunTrace,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a ProblemInstance, cfg: &BaselineConfig) -> Self {
        Self { problem, diagnostics: cfg.diagnostics, trace: RunTrace::new(cfg.algo.name(), cfg.seed) }
    }

    /// Row for `x^t`; `estimate` is the method's running gradient estimate, if any.
    fn record(&mut self, t: usize, x: &[f64], ledger: &CostLedger, estimate: Option<&[f64]>, e_t: f64, steps: u64) {
        let grad = self.problem.full_gradient_unchecked(x);
        let (f_value, sigma) = if self.diagnostics {
            let f = self.problem.full_objective(x).unwrap_or(f64::NAN);
            (f, estimate.map_or(f64::NAN, |g| dist_sq(g, &grad)))
        } else {
            (f64::NAN, f64::NAN)
        };
        self.trace.push(TraceRow {
            round: t,
            cum_comm: ledger.communication(),
            cum_local: ledger.local(),
            grad_norm_sq: norm_sq(&grad),
            f_value,
            e_t,
            sigma_hat_sq: sigma,
            local_steps: steps,
            n_a: ledger.n_a(),
            n_r: ledger.n_r(),
            n_d: ledger.n_d(),
        });
    }

    fn check(&self, t: usize, v: &[f64]) -> Result<()> {
        if all_finite(v) {
            Ok(())
        } else {
            Err(SimError::Divergence {
                iteration: t,
                reason: "non-finite iterate".into(),
                trace: Box::new(self.trace.clone()),
            })
        }
    }

    fn finish(self, x: Vec<f64>, ledger: &CostLedger) -> Result<BaselineOutput> {
        Ok(BaselineOutput { trace: self.trace, last: x, totals: ledger.totals()? })
    }
}

fn setup(problem: &ProblemInstance, cost: &CostConfig, cfg: &BaselineConfig, x0: &[f64]) -> Result<(CostLedger, SimRng)> {
    cfg.validate()?;
    check_dim(x0, problem.dim())?;
    Ok((CostLedger::new(cost.clone(), problem.n())?, stream_rng(cfg.seed, ALGORITHM_STREAM)))
}

/// `K` gradient steps on `f_i + <shift, .>` from `x`.
fn local_gd(problem: &ProblemInstance, i: usize, x: &[f64], shift: Option<&[f64]>, step: f64, k: u64) -> Vec<f64> {
    let mut y = x.to_vec();
    for _ in 0..k {
        let mut g = problem.grad(i, &y);
        if let Some(s) = shift {
            axpy(1.0, s, &mut g);
        }
        axpy(-step, &g, &mut y);
    }
    y
}

/// Gradient descent on `f`, one full synchronization per iteration.
pub fn run_gd(problem: &ProblemInstance, cost: &CostConfig, cfg: &BaselineConfig, x0: &[f64]) -> Result<BaselineOutput> {
    let (mut ledger, _) = setup(problem, cost, cfg, x0)?;
    let mut rec = Recorder::new(problem, cfg);
    let mut x = x0.to_vec();
    rec.record(0, &x, &ledger, None, f64::NAN, 0);
    for t in 0..cfg.t as usize {
        let g = full_sync_gradient(problem, &x, &mut ledger)?;
        axpy(-cfg.step, &g, &mut x);
        rec.check(t, &x)?;
        rec.record(t + 1, &x, &ledger, None, f64::NAN, 1);
    }
    rec.finish(x, &ledger)
}

/// FedAvg with client sampling: `K` local steps per selected client, then averaging.
pub fn run_fedavg(problem: &ProblemInstance, cost: &CostConfig, cfg: &BaselineConfig, x0: &[f64]) -> Result<BaselineOutput> {
    let (mut ledger, mut rng) = setup(problem, cost, cfg, x0)?;
    let mut rec = Recorder::new(problem, cfg);
    let mut x = x0.to_vec();
    rec.record(0, &x, &ledger, None, f64::NAN, 0);
    for t in 0..cfg.t as usize {
        let (s, mut h) = ledger.select_random(&mut rng);
        h.record_all(cfg.k);
        ledger.close_round(h);
        let locals: Vec<Vec<f64>> = s.iter().map(|&i| local_gd(problem, i, &x, None, cfg.step, cfg.k)).collect();
        x = mean_of(locals.iter().map(Vec::as_slice), problem.dim());
        rec.check(t, &x)?;
        rec.record(t + 1, &x, &ledger, None, f64::NAN, cfg.k);
    }
    rec.finish(x, &ledger)
}

/// Scaffold with the SAG aggregate as control variate.
pub fn run_scaffold(problem: &ProblemInstance, cost: &CostConfig, cfg: &BaselineConfig, x0: &[f64]) -> Result<BaselineOutput> {
    let (mut ledger, mut rng) = setup(problem, cost, cfg, x0)?;
    let n = problem.n();
    let d = problem.dim();
    let mut rec = Recorder::new(problem, cfg);
    ledger.full_sync();
    let mut table = problem.client_gradients(x0)?;
    let mut b = mean_of(table.iter().map(Vec::as_slice), d);
    let mut x = x0.to_vec();
    rec.record(0, &x, &ledger, Some(&b), f64::NAN, 0);
    for t in 0..cfg.t as usize {
        let (s, mut h) = ledger.select_random(&mut rng);
        h.record_all(1);
        ledger.close_round(h);
        let fresh: Vec<Vec<f64>> = s.iter().map(|&i| problem.grad(i, &x)).collect();
        for (&i, g) in s.iter().zip(&fresh) {
            for k in 0..d {
                b[k] += (g[k] - table[i][k]) / n as f64;
            }
            table[i].clone_from(g);
        }

        let mut h = ledger.select_arbitrary(&s)?;
        h.record_all(cfg.k);
        ledger.close_round(h);
        let locals: Vec<Vec<f64>> = s
            .iter()
            .zip(&fresh)
            .map(|(&i, gi)| {
                let shift: Vec<f64> = b.iter().zip(gi).map(|(bk, gk)| bk - gk).collect();
                local_gd(problem, i, &x, Some(&shift), cfg.step, cfg.k)
            })
            .collect();
        x = mean_of(locals.iter().map(Vec::as_slice), d);
        rec.check(t, &x)?;
        rec.record(t + 1, &x, &ledger, Some(&b), f64::NAN, 1 + cfg.k);
    }
    rec.finish(x, &ledger)
}

/// FedRed-GD: closed-form doubly regularized delegate step, anchor refreshed with
/// probability `p` through a full synchronization.
pub fn run_fedred_gd(problem: &ProblemInstance, cost: &CostConfig, cfg: &BaselineConfig, x0: &[f64]) -> Result<BaselineOutput> {
    let (mut ledger, mut rng) = setup(problem, cost, cfg, x0)?;
    let delegate = cost.delegate[0];
    let mut rec = Recorder::new(problem, cfg);
    let mut anchor = x0.to_vec();
    let mut anchor_full = full_sync_gradient(problem, &anchor, &mut ledger)?;
    let mut anchor_local = problem.grad(delegate, &anchor);
    let mut x = x0.to_vec();
    rec.record(0, &x, &ledger, None, f64::NAN, 0);
    let (eta, lambda) = (cfg.eta, cfg.lambda);
    for t in 0..cfg.t as usize {
        let mut h = ledger.select_delegate();
        h.record(delegate, 1)?;
        ledger.close_round(h);
        let g1 = problem.grad(delegate, &x);
        x = (0..x.len())
            .map(|k| {
                let v = g1[k] + anchor_full[k] - anchor_local[k];
                (eta * x[k] + lambda * anchor[k] - v) / (eta + lambda)
            })
            .collect();
        rec.check(t, &x)?;
        if sample_bernoulli(cfg.p, &mut rng) {
            anchor.clone_from(&x);
            anchor_full = full_sync_gradient(problem, &anchor, &mut ledger)?;
            anchor_local = problem.grad(delegate, &anchor);
        }
        rec.record(t + 1, &x, &ledger, None, f64::NAN, 1);
    }
    rec.finish(x, &ledger)
}

/// SABER-full: PAGE-style estimate `v^t`, then a proximal subproblem solved by a
/// uniformly drawn client.
pub fn run_saber_full(problem: &ProblemInstance, cost: &CostConfig, cfg: &BaselineConfig, x0: &[f64]) -> Result<BaselineOutput> {
    let (mut ledger, mut rng) = setup(problem, cost, cfg, x0)?;
    let d = problem.dim();
    let mut rec = Recorder::new(problem, cfg);
    let mut v = full_sync_gradient(problem, x0, &mut ledger)?;
    let mut x_prev = x0.to_vec();
    let mut x = x0.to_vec();
    rec.record(0, &x, &ledger, Some(&v), f64::NAN, 0);
    for t in 0..cfg.t as usize {
        if t >= 1 {
            if sample_bernoulli(cfg.p, &mut rng) {
                v = full_sync_gradient(problem, &x, &mut ledger)?;
            } else {
                let (s, mut h) = ledger.select_random(&mut rng);
                h.record_all(2);
                ledger.close_round(h);
                for &i in &s {
                    let a = problem.grad(i, &x);
                    let b = problem.grad(i, &x_prev);
                    for k in 0..d {
                        v[k] += (a[k] - b[k]) / s.len() as f64;
                    }
                }
            }
            if !all_finite(&v) {
                return Err(SimError::Divergence {
                    iteration: t,
                    reason: "non-finite gradient estimate".into(),
                    trace: Box::new(rec.trace.clone()),
                });
            }
            // The estimate for x^t is now known.
            if cfg.diagnostics {
                let grad = problem.full_gradient_unchecked(&x);
                rec.trace.rows[t].sigma_hat_sq = dist_sq(&v, &grad);
            }
        }
        let (chosen, mut h) = ledger.select_random_sized(1, &mut rng)?;
        let out = solve_subproblem(
            problem,
            chosen[0],
            cfg.local_solver,
            cfg.lambda,
            cfg.local_smoothness,
            &x,
            &v,
            &mut rng,
            &mut h,
            false,
        );
        ledger.close_round(h);
        let out = out?;
        rec.check(t, &out.x_next)?;
        x_prev = std::mem::replace(&mut x, out.x_next);
        rec.record(t + 1, &x, &ledger, None, out.e_t, out.queries);
    }
    rec.finish(x, &ledger)
}

pub fn run_baseline(problem: &ProblemInstance, cost: &CostConfig, cfg: &BaselineConfig, x0: &[f64]) -> Result<BaselineOutput> {
    match cfg.algo {
        BaselineKind::Gd => run_gd(problem, cost, cfg, x0),
        BaselineKind::FedAvg => run_fedavg(problem, cost, cfg, x0),
        BaselineKind::Scaffold => run_scaffold(problem, cost, cfg, x0),
        BaselineKind::FedRedGd => run_fedred_gd(problem, cost, cfg, x0),
        BaselineKind::SaberFull => run_saber_full(problem, cost, cfg, x0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::SeparableQuadratic;
    use crate::rng::seeded;
    use num_rational::Rational64;
    use rand::Rng;

    fn coin(rng: &mut SimRng) -> f64 {
        rng.random::<f64>()
    }

    fn problem(n: usize, d: usize, same_curvature: bool, seed: u64) -> ProblemInstance {
        let mut rng = seeded(seed);
        let base: Vec<f64> = (0..d).map(|_| 1.0 + 3.0 * coin(&mut rng)).collect();
        let clients = (0..n)
            .map(|_| {
                let a = if same_curvature { base.clone() } else { base.iter().map(|v| v + coin(&mut rng)).collect() };
                SeparableQuadratic::new(a, (0..d).map(|_| coin(&mut rng) - 0.5).collect())
            })
            .collect();
        ProblemInstance::from_clients("q", clients).unwrap()
    }

    fn cfg(algo: BaselineKind, t: u64) -> BaselineConfig {
        BaselineConfig { step: 0.2, k: 1, ..BaselineConfig::new(algo, t, 5) }
    }

    #[test]
    fn gd_costs_on_full_participation() {
        let p = problem(4, 3, false, 0);
        let cost = CostConfig::with_integer_costs(3, 1, 4).unwrap();
        let out = run_gd(&p, &cost, &cfg(BaselineKind::Gd, 7), &[1.0; 3]).unwrap();
        assert_eq!(out.totals.communication, Rational64::from_integer(21));
        assert_eq!(out.totals.local, 7);
    }

    #[test]
    fn gd_solves_scalar_quadratic_in_one_step() {
        let p = ProblemInstance::from_clients("q", vec![SeparableQuadratic::new(vec![4.0], vec![0.0])]).unwrap();
        let c = BaselineConfig { step: 0.25, ..cfg(BaselineKind::Gd, 1) };
        let out = run_gd(&p, &CostConfig::unit(1), &c, &[3.0]).unwrap();
        assert_eq!(out.last, vec![0.0]);
    }

    #[test]
    fn fedavg_one_step_full_set_matches_gd() {
        let p = problem(4, 3, false, 1);
        let cost = CostConfig::unit(4);
        let gd = run_gd(&p, &cost, &cfg(BaselineKind::Gd, 5), &[1.0; 3]).unwrap();
        let fa = run_fedavg(&p, &cost, &cfg(BaselineKind::FedAvg, 5), &[1.0; 3]).unwrap();
        for (a, b) in gd.last.iter().zip(&fa.last) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(fa.totals.communication, Rational64::from_integer(5));
    }

    #[test]
    fn fedavg_costs() {
        let p = problem(6, 2, false, 2);
        let cost = CostConfig::with_integer_costs(4, 2, 3).unwrap();
        let c = BaselineConfig { k: 3, ..cfg(BaselineKind::FedAvg, 10) };
        let out = run_fedavg(&p, &cost, &c, &[0.0; 2]).unwrap();
        assert_eq!(out.totals.communication, Rational64::from_integer(20));
        assert_eq!(out.totals.local, 30);
    }

    #[test]
    fn scaffold_full_set_single_step_is_gd() {
        let p = problem(4, 3, false, 3);
        let cost = CostConfig::unit(4);
        let gd = run_gd(&p, &cost, &cfg(BaselineKind::Gd, 6), &[1.0; 3]).unwrap();
        let sc = run_scaffold(&p, &cost, &cfg(BaselineKind::Scaffold, 6), &[1.0; 3]).unwrap();
        for (a, b) in gd.last.iter().zip(&sc.last) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaffold_costs() {
        let p = problem(10, 2, false, 4);
        let cost = CostConfig::with_integer_costs(5, 2, 3).unwrap();
        let c = BaselineConfig { k: 4, ..cfg(BaselineKind::Scaffold, 6) };
        let out = run_scaffold(&p, &cost, &c, &[0.0; 2]).unwrap();
        assert_eq!(out.totals.communication, Rational64::from_integer(5 * 4 + 6 * (2 + 5)));
        assert_eq!(out.totals.local, 4 + 6 * 5);
    }

    #[test]
    fn fedred_with_certain_refresh_uses_exact_gradient() {
        let p = problem(5, 2, false, 5);
        let cost = CostConfig::unit(5);
        let c = BaselineConfig { p: 1.0, eta: 3.0, lambda: 2.0, ..cfg(BaselineKind::FedRedGd, 4) };
        let out = run_fedred_gd(&p, &cost, &c, &[1.0, -1.0]).unwrap();
        assert_eq!(out.trace.last().unwrap().n_a, 5);
        // With x~ = x_t the step is x_t - grad f(x_t) / (eta + lambda).
        let x3 = &out.trace.rows[3];
        assert!(x3.grad_norm_sq < out.trace.rows[0].grad_norm_sq);
    }

    #[test]
    fn fedred_large_eta_freezes() {
        let p = problem(3, 2, false, 6);
        let c = BaselineConfig { eta: 1e12, lambda: 1.0, p: 0.5, ..cfg(BaselineKind::FedRedGd, 3) };
        let out = run_fedred_gd(&p, &CostConfig::unit(3), &c, &[1.0, 2.0]).unwrap();
        assert!(dist_sq(&out.last, &[1.0, 2.0]) < 1e-20);
    }

    #[test]
    fn saber_full_participation_is_exact() {
        let p = problem(4, 3, false, 7);
        let c = BaselineConfig { lambda: 2.0, p: 0.5, local_smoothness: 6.0, ..cfg(BaselineKind::SaberFull, 8) };
        let out = run_saber_full(&p, &CostConfig::unit(4), &c, &[1.0; 3]).unwrap();
        for r in &out.trace.rows[..8] {
            assert!(r.sigma_hat_sq < 1e-24, "{r:?}");
        }
    }

    #[test]
    fn baseline_names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
    }
}
