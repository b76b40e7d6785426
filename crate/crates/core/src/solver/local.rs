//! The delegate subproblem
//! `F_t(x) = f_1(x) + h_1(x^t) + <g^t - grad f_1(x^t), x - x^t> + lambda/2 ||x - x^t||^2`
//! and the composite-gradient local solvers.

use serde::{Deserialize, Serialize};

use crate::cost::RoundHandle;
use crate::error::{check_dim, Result, SimError};
use crate::linalg::{dist_sq, norm};
use crate::problems::ProblemInstance;
use crate::rng::SimRng;
use crate::sampling::sample_geometric;

/// Absolute slack used by the contract checks, scaled by the magnitudes involved.
const CONTRACT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalSolver {
    /// Best of `k` steps by subproblem gradient norm.
    Const { k: u64 },
    /// `Geom(p) + 1` steps, last iterate.
    Geometric { p: f64 },
}

impl LocalSolver {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LocalSolver::Const { k: 0 } => Err(SimError::InvalidConfig("K must be at least 1".into())),
            LocalSolver::Geometric { p } if !(p > 0.0 && p <= 1.0) => {
                Err(SimError::InvalidConfig(format!("p must lie in (0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }
}

/// `F_t` for one client, up to the constant `h_1(x^t)`.
#[derive(Debug, Clone)]
pub struct Subproblem<'a> {
    problem: &'a ProblemInstance,
    client: usize,
    x_t: &'a [f64],
    /// `g^t - grad f_1(x^t)`
    shift: Vec<f64>,
    lambda: f64,
}

impl<'a> Subproblem<'a> {
    /// `grad_t` is `grad f_client(x_t)`, obtained by the caller.
    pub fn new(
        problem: &'a ProblemInstance,
        client: usize,
        x_t: &'a [f64],
        g_t: &[f64],
        grad_t: &[f64],
        lambda: f64,
    ) -> Result<Self> {
        let d = problem.dim();
        check_dim(x_t, d)?;
        check_dim(g_t, d)?;
        check_dim(grad_t, d)?;
        if client >= problem.n() {
            return Err(SimError::InvalidInput(format!("client {client} out of range")));
        }
        if !(lambda > 0.0) {
            return Err(SimError::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        let shift = g_t.iter().zip(grad_t).map(|(g, f)| g - f).collect();
        Ok(Self { problem, client, x_t, shift, lambda })
    }

    pub fn client(&self) -> usize {
        self.client
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let f = self.problem.client(self.client).value(x);
        let mut lin = 0.0;
        for k in 0..x.len() {
            lin += self.shift[k] * (x[k] - self.x_t[k]);
        }
        f + lin + 0.5 * self.lambda * dist_sq(x, self.x_t)
    }

    /// `grad F_t(x)` given `grad f_1(x)`.
    pub fn gradient_from(&self, x: &[f64], grad_x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|k| grad_x[k] + self.shift[k] + self.lambda * (x[k] - self.x_t[k]))
            .collect()
    }

    /// Uncharged `grad F_t(x)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient_from(x, &self.problem.grad(self.client, x))
    }

    /// `(L y + lambda x^t - shift - grad f_1(y)) / (lambda + L)` given `grad f_1(y)`.
    pub fn step_from(&self, y: &[f64], grad_y: &[f64], l: f64) -> Vec<f64> {
        let inv = 1.0 / (self.lambda + l);
        (0..y.len())
            .map(|k| (l * y[k] + self.lambda * self.x_t[k] - self.shift[k] - grad_y[k]) * inv)
            .collect()
    }
}

/// `grad f_1(x) + g_t - grad f_1(x_t) + lambda (x - x_t)`. Two delegate queries.
pub fn subproblem_gradient(
    problem: &ProblemInstance,
    x: &[f64],
    x_t: &[f64],
    g_t: &[f64],
    lambda: f64,
    handle: &mut RoundHandle,
) -> Result<Vec<f64>> {
    let client = delegate_of(handle)?;
    check_dim(x, problem.dim())?;
    handle.record(client, 2)?;
    let grad_t = problem.grad(client, x_t);
    let sub = Subproblem::new(problem, client, x_t, g_t, &grad_t, lambda)?;
    Ok(sub.gradient(x))
}

/// One composite-gradient step from `y_k`. One delegate query at `y_k`; the
/// delegate already holds `grad f_1(x_t)`.
pub fn local_cgm_step(
    problem: &ProblemInstance,
    y_k: &[f64],
    x_t: &[f64],
    g_t: &[f64],
    lambda: f64,
    l1: f64,
    handle: &mut RoundHandle,
) -> Result<Vec<f64>> {
    let client = delegate_of(handle)?;
    check_l(l1)?;
    check_dim(y_k, problem.dim())?;
    handle.record(client, 1)?;
    let grad_t = problem.grad(client, x_t);
    let sub = Subproblem::new(problem, client, x_t, g_t, &grad_t, lambda)?;
    Ok(sub.step_from(y_k, &problem.grad(client, y_k), l1))
}

fn delegate_of(handle: &RoundHandle) -> Result<usize> {
    handle
        .members()
        .first()
        .copied()
        .ok_or_else(|| SimError::Accounting("round has no members".into()))
}

fn check_l(l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(SimError::InvalidConfig(format!("local smoothness must be positive, got {l}")));
    }
    Ok(())
}

/// Per-step contract measurements from an instrumented solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContractStats {
    pub steps: u64,
    /// Steps with `F_t(y_{k+1}) > F_t(y_k)` beyond rounding slack.
    pub monotone_violations: u64,
    /// Steps with `||grad F_t(y_{k+1})|| > 2 L ||y_{k+1} - y_k||` beyond rounding slack.
    pub gradient_violations: u64,
    /// Largest `F_t(y_{k+1}) - F_t(y_k)` seen.
    pub max_increase: f64,
    /// Largest `||grad F_t(y_{k+1})|| / (2 L ||y_{k+1} - y_k||)` over steps that moved.
    pub max_gradient_ratio: f64,
    /// `F_t(x^{t+1}) <= F_t(x^t)` for the returned point.
    pub outer_monotone: bool,
    /// The same comparison without rounding slack.
    pub outer_monotone_strict: bool,
    /// Outer iterations covered, and those failing each comparison.
    pub outer_iterations: u64,
    pub outer_failures: u64,
    pub outer_strict_failures: u64,
}

impl ContractStats {
    pub fn merge(&mut self, o: &ContractStats) {
        self.steps += o.steps;
        self.monotone_violations += o.monotone_violations;
        self.gradient_violations += o.gradient_violations;
        self.max_increase = self.max_increase.max(o.max_increase);
        self.max_gradient_ratio = self.max_gradient_ratio.max(o.max_gradient_ratio);
        self.outer_iterations += o.outer_iterations;
        self.outer_failures += o.outer_failures;
        self.outer_strict_failures += o.outer_strict_failures;
    }

    pub fn holds(&self) -> bool {
        self.monotone_violations == 0 && self.gradient_violations == 0 && self.outer_monotone
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub x_next: Vec<f64>,
    /// Delegate oracle queries charged.
    pub queries: u64,
    /// Local steps taken.
    pub steps: u64,
    /// `||grad F_t(x_next)||`
    pub e_t: f64,
    pub contracts: Option<ContractStats>,
}

/// Runs `solver` on the subproblem of `client`. Charges the queries the client
/// makes on `handle`: `K + 1` for the best-of-`K` rule (the last iterate's
/// gradient is needed for the comparison), `Khat + 1` for the geometric rule.
#[allow(clippy::too_many_arguments)]
pub(crate) fn solve_subproblem(
    problem: &ProblemInstance,
    client: usize,
    solver: LocalSolver,
    lambda: f64,
    l: f64,
    x_t: &[f64],
    g_t: &[f64],
    rng: &mut SimRng,
    handle: &mut RoundHandle,
    check: bool,
) -> Result<LocalOutcome> {
    solver.validate()?;
    check_l(l)?;
    let grad_t = problem.grad(client, x_t);
    let sub = Subproblem::new(problem, client, x_t, g_t, &grad_t, lambda)?;
    let (steps, best_of) = match solver {
        LocalSolver::Const { k } => (k, true),
        LocalSolver::Geometric { p } => (sample_geometric(p, rng)? + 1, false),
    };

    let mut stats = check.then(ContractStats::default);
    let f_start = if check { sub.value(x_t) } else { f64::NAN };
    let mut y = x_t.to_vec();
    let mut grad_y = grad_t.clone();
    let mut f_y = f_start;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..steps {
        let y_next = sub.step_from(&y, &grad_y, l);
        let grad_next = problem.grad(client, &y_next);
        let big_grad_next = sub.gradient_from(&y_next, &grad_next);
        let e = norm(&big_grad_next);
        if let Some(st) = stats.as_mut() {
            let f_next = sub.value(&y_next);
            let scale_f = f_y.abs().max(f_next.abs()).max(1.0);
            let inc = f_next - f_y;
            st.max_increase = st.max_increase.max(inc);
            if inc > CONTRACT_RTOL * scale_f {
                st.monotone_violations += 1;
            }
            let mv = dist_sq(&y_next, &y).sqrt();
            let bound = 2.0 * l * mv;
            let scale_g = (norm(&grad_next) + norm(&grad_y) + sub.lambda * mv + l * mv).max(1.0);
            // Steps that only move by rounding say nothing about the ratio.
            if mv > 0.0 && e > CONTRACT_RTOL * scale_g {
                st.max_gradient_ratio = st.max_gradient_ratio.max(e / bound);
            }
            if e > bound + CONTRACT_RTOL * scale_g {
                st.gradient_violations += 1;
            }
            st.steps += 1;
            f_y = f_next;
        }
        if best_of && best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, y_next.clone()));
        }
        y = y_next;
        grad_y = grad_next;
        if !best_of {
            best = Some((e, y.clone()));
        }
    }
    let (e_t, x_next) = best.expect("at least one local step");
    let queries = if best_of { steps + 1 } else { steps };
    handle.record(client, queries)?;
    if let Some(st) = stats.as_mut() {
        let f_out = sub.value(&x_next);
        let scale = f_start.abs().max(f_out.abs()).max(1.0);
        st.outer_monotone_strict = f_out <= f_start;
        st.outer_monotone = f_out - f_start <= CONTRACT_RTOL * scale;
        st.outer_iterations = 1;
        st.outer_failures = u64::from(!st.outer_monotone);
        st.outer_strict_failures = u64::from(!st.outer_monotone_strict);
    }
    Ok(LocalOutcome { x_next, queries, steps, e_t, contracts: stats })
}

/// Best-of-`K` local solve on the delegate of `handle`.
#[allow(clippy::too_many_arguments)]
pub fn cgm_const(
    problem: &ProblemInstance,
    lambda: f64,
    k: u64,
    l1: f64,
    x_t: &[f64],
    g_t: &[f64],
    handle: &mut RoundHandle,
) -> Result<LocalOutcome> {
    let client = delegate_of(handle)?;
    // The constant rule draws nothing from this generator.
    let mut rng = crate::rng::seeded(0);
    solve_subproblem(problem, client, LocalSolver::Const { k }, lambda, l1, x_t, g_t, &mut rng, handle, false)
}

/// Geometric-length local solve on the delegate of `handle`.
#[allow(clippy::too_many_arguments)]
pub fn cgm_rand(
    problem: &ProblemInstance,
    lambda: f64,
    p: f64,
    l1: f64,
    x_t: &[f64],
    g_t: &[f64],
    rng: &mut SimRng,
    handle: &mut RoundHandle,
) -> Result<LocalOutcome> {
    let client = delegate_of(handle)?;
    solve_subproblem(problem, client, LocalSolver::Geometric { p }, lambda, l1, x_t, g_t, rng, handle, false)
}

/// `F_t(x) - F_t(x_t)` for an exact check outside the solver.
pub fn subproblem_decrease(sub: &Subproblem<'_>, x: &[f64]) -> f64 {
    sub.value(x) - sub.value(sub.x_t)
}
