//! Finite-sum objectives `f = (1/n) sum_i f_i` with per-client first-order oracles.
//!
//! Client `0` is the delegate client. The benchmark generators live in
//! [`quadratic`] and [`logistic`]; [`libsvm`] reads sparse datasets.

pub mod libsvm;
pub mod logistic;
pub mod quadratic;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SimError};
use crate::linalg::{dist_sq, norm_sq, scale};

/// A local objective reachable only through its oracle.
pub trait ClientObjective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `grad f_i(x)` into `out`.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    fn value_and_gradient(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.gradient_into(x, out);
        self.value(x)
    }
}

/// Separable quadratic plus optional log-sum penalty:
/// `sum_k (a_k x_k^2 / 2 - c_k x_k) + offset + sum_k log(1 + alpha |x_k|)`.
///
/// `a_k` may be negative. The penalty gradient at `x_k = 0` is taken as `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    pub curvature: Vec<f64>,
    pub linear: Vec<f64>,
    pub offset: f64,
    pub penalty: f64,
}

impl SeparableQuadratic {
    pub fn new(curvature: Vec<f64>, linear: Vec<f64>) -> Self {
        assert_eq!(curvature.len(), linear.len());
        Self { curvature, linear, offset: 0.0, penalty: 0.0 }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn with_log_penalty(mut self, alpha: f64) -> Self {
        self.penalty = alpha;
        self
    }
}

pub(crate) fn log_penalty_value(alpha: f64, x: f64) -> f64 {
    if alpha == 0.0 {
        0.0
    } else {
        (alpha * x.abs()).ln_1p()
    }
}

pub(crate) fn log_penalty_derivative(alpha: f64, x: f64) -> f64 {
    if alpha == 0.0 || x == 0.0 {
        0.0
    } else {
        alpha * x.signum() / (1.0 + alpha * x.abs())
    }
}

impl ClientObjective for SeparableQuadratic {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.offset;
        for k in 0..x.len() {
            let xk = x[k];
            v += 0.5 * self.curvature[k] * xk * xk - self.linear[k] * xk
                + log_penalty_value(self.penalty, xk);
        }
        v
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..x.len() {
            out[k] = self.curvature[k] * x[k] - self.linear[k]
                + log_penalty_derivative(self.penalty, x[k]);
        }
    }
}

/// Immutable problem: `n` clients over `R^d`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    name: String,
    d: usize,
    clients: Vec<Arc<dyn ClientObjective>>,
    /// Best known lower estimate of `f*`, used to report `F^0`.
    pub lower_bound_hint: Option<f64>,
}

impl ProblemInstance {
    pub fn new(name: impl Into<String>, clients: Vec<Arc<dyn ClientObjective>>) -> Result<Self> {
        let first = clients
            .first()
            .ok_or_else(|| SimError::InvalidInput("a problem needs at least one client".into()))?;
        let d = first.dim();
        if let Some(bad) = clients.iter().position(|c| c.dim() != d) {
            return Err(SimError::InvalidInput(format!(
                "client {bad} has dimension {} but client 0 has {d}",
                clients[bad].dim()
            )));
        }
        Ok(Self { name: name.into(), d, clients, lower_bound_hint: None })
    }

    pub fn from_clients<C: ClientObjective + 'static>(
        name: impl Into<String>,
        clients: Vec<C>,
    ) -> Result<Self> {
        Self::new(
            name,
            clients.into_iter().map(|c| Arc::new(c) as Arc<dyn ClientObjective>).collect(),
        )
    }

    pub fn with_lower_bound(mut self, f_star: f64) -> Self {
        self.lower_bound_hint = Some(f_star);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn client(&self, i: usize) -> &dyn ClientObjective {
        self.clients[i].as_ref()
    }

    fn check_client(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(SimError::InvalidInput(format!(
                "client index {i} out of range for n = {}",
                self.n()
            )));
        }
        Ok(())
    }

    /// `(f_i(x), grad f_i(x))`. Pure: no accounting happens here.
    pub fn oracle_query(&self, i: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_client(i)?;
        check_dim(x, self.d)?;
        let mut g = vec![0.0; self.d];
        let v = self.clients[i].value_and_gradient(x, &mut g);
        Ok((v, g))
    }

    /// `grad f_i(x)` without dimension checks; internal hot path.
    pub(crate) fn grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        self.clients[i].gradient_into(x, &mut g);
        g
    }

    pub fn client_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_client(i)?;
        check_dim(x, self.d)?;
        Ok(self.grad(i, x))
    }

    pub fn full_objective(&self, x: &[f64]) -> Result<f64> {
        check_dim(x, self.d)?;
        let total: f64 = self.clients.iter().map(|c| c.value(x)).sum();
        Ok(total / self.n() as f64)
    }

    /// Mean of the client gradients, accumulated in client order.
    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(x, self.d)?;
        Ok(self.full_gradient_unchecked(x))
    }

    pub(crate) fn full_gradient_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.d];
        let mut g = vec![0.0; self.d];
        for c in &self.clients {
            c.gradient_into(x, &mut g);
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
        scale(1.0 / self.n() as f64, &mut acc);
        acc
    }

    /// All client gradients at `x`, in client order.
    pub fn client_gradients(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(x, self.d)?;
        Ok((0..self.n()).map(|i| self.grad(i, x)).collect())
    }
}

/// Similarity and smoothness constants of a problem, plus the quantities derived
/// from the per-round client budget `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConstants {
    /// Average second-order dissimilarity `delta`.
    pub delta: f64,
    /// Delegate dissimilarity `Delta_1`: Lipschitz constant of `grad(f - f_1)`.
    pub delta1: f64,
    /// Delegate smoothness `L_1`.
    pub l1: f64,
    pub lmax: Option<f64>,
    pub delta_max: Option<f64>,
}

impl SimilarityConstants {
    pub fn new(delta: f64, delta1: f64, l1: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta1 >= 0.0 && l1 > 0.0) {
            return Err(SimError::InvalidInput(format!(
                "constants must satisfy delta >= 0, Delta_1 >= 0, L_1 > 0 (got {delta}, {delta1}, {l1})"
            )));
        }
        Ok(Self { delta, delta1, l1, lmax: None, delta_max: None })
    }

    /// `n / m`
    pub fn n_m(n: usize, m: usize) -> f64 {
        n as f64 / m as f64
    }

    /// `(n - m) / (n - 1)`, with `q_m = 0` when `m = n` (including `n = 1`).
    pub fn q_m(n: usize, m: usize) -> f64 {
        if m >= n {
            0.0
        } else {
            (n - m) as f64 / (n - 1) as f64
        }
    }

    /// `delta_m^2 = (q_m / m) delta^2`
    pub fn delta_m_sq(&self, n: usize, m: usize) -> f64 {
        Self::q_m(n, m) / m as f64 * self.delta * self.delta
    }

    pub fn delta_m(&self, n: usize, m: usize) -> f64 {
        self.delta_m_sq(n, m).sqrt()
    }
}

/// Local samples of `L_1`, `delta` and `Delta_1` along one displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSamples {
    pub l1: f64,
    pub delta: f64,
    pub delta1: f64,
}

impl ConstantSamples {
    pub fn max(self, other: Self) -> Self {
        Self {
            l1: self.l1.max(other.l1),
            delta: self.delta.max(other.delta),
            delta1: self.delta1.max(other.delta1),
        }
    }
}

/// Difference quotients of `grad f_1`, `grad h_i = grad(f - f_i)` between two points.
/// Callers keep running maxima.
pub fn estimate_constants(
    problem: &ProblemInstance,
    x_prev: &[f64],
    x_next: &[f64],
) -> Result<ConstantSamples> {
    check_dim(x_prev, problem.dim())?;
    check_dim(x_next, problem.dim())?;
    let disp_sq = dist_sq(x_prev, x_next);
    if disp_sq == 0.0 {
        return Err(SimError::Degenerate("zero displacement between points".into()));
    }
    let n = problem.n();
    let d = problem.dim();
    let diffs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let a = problem.grad(i, x_prev);
            let b = problem.grad(i, x_next);
            a.iter().zip(&b).map(|(u, v)| u - v).collect()
        })
        .collect();
    let mean = crate::linalg::mean_of(diffs.iter().map(Vec::as_slice), d);
    let h_diff_sq = |i: usize| -> f64 {
        diffs[i].iter().zip(&mean).map(|(u, v)| (v - u) * (v - u)).sum()
    };
    let avg_h: f64 = (0..n).map(h_diff_sq).sum::<f64>() / n as f64;
    Ok(ConstantSamples {
        l1: (norm_sq(&diffs[0]) / disp_sq).sqrt(),
        delta: (avg_h / disp_sq).sqrt(),
        delta1: (h_diff_sq(0) / disp_sq).sqrt(),
    })
}

/// Running maxima of [`estimate_constants`] over `samples` random pairs drawn
/// uniformly from the box of half-width `radius` around `center`.
pub fn probe_constants(
    problem: &ProblemInstance,
    center: &[f64],
    radius: f64,
    samples: usize,
    rng: &mut crate::rng::SimRng,
) -> Result<SimilarityConstants> {
    use rand::Rng;
    check_dim(center, problem.dim())?;
    if samples == 0 || !(radius > 0.0) {
        return Err(SimError::InvalidConfig("probe needs samples > 0 and radius > 0".into()));
    }
    let mut acc = ConstantSamples { l1: 0.0, delta: 0.0, delta1: 0.0 };
    let draw = |rng: &mut crate::rng::SimRng| -> Vec<f64> {
        center.iter().map(|c| c + rng.random_range(-radius..=radius)).collect()
    };
    for _ in 0..samples {
        let x = draw(rng);
        let y = draw(rng);
        if let Ok(s) = estimate_constants(problem, &x, &y) {
            acc = acc.max(s);
        }
    }
    let l1 = if acc.l1 > 0.0 { acc.l1 } else { f64::MIN_POSITIVE };
    SimilarityConstants::new(acc.delta, acc.delta1, l1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, c: f64) -> SeparableQuadratic {
        SeparableQuadratic::new(vec![a], vec![c])
    }

    #[test]
    fn stationary_point_of_half_norm() {
        let p = ProblemInstance::from_clients("q", vec![SeparableQuadratic::new(vec![1.0; 3], vec![0.0; 3])])
            .unwrap();
        let (v, g) = p.oracle_query(0, &[0.0; 3]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn shifted_quadratic_hand_value() {
        // 1/2 <A(x-b), x-b> with A = 2, b = 1 expands to x^2 - 2x + 1.
        let c = scalar(2.0, 2.0).with_offset(1.0);
        let p = ProblemInstance::from_clients("q", vec![c]).unwrap();
        let (v, g) = p.oracle_query(0, &[0.0]).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(g, vec![-2.0]);
    }

    #[test]
    fn log_penalty_flat_at_origin() {
        let c = SeparableQuadratic::new(vec![0.0; 4], vec![0.0; 4]).with_log_penalty(10.0);
        let p = ProblemInstance::from_clients("pen", vec![c]).unwrap();
        let (v, g) = p.oracle_query(0, &[0.0; 4]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0; 4]);
    }

    #[test]
    fn opposite_linear_clients_cancel() {
        let p = ProblemInstance::from_clients("lin", vec![scalar(0.0, -1.0), scalar(0.0, 1.0)]).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(p.full_objective(&[x]).unwrap(), 0.0);
            assert_eq!(p.full_gradient(&[x]).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn mean_of_scalar_curvatures() {
        let clients = (1..=4).map(|a| scalar(a as f64, 0.0)).collect();
        let p = ProblemInstance::from_clients("a", clients).unwrap();
        assert_eq!(p.full_gradient(&[1.0]).unwrap(), vec![2.5]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = ProblemInstance::from_clients("q", vec![scalar(1.0, 0.0)]).unwrap();
        assert!(matches!(p.oracle_query(0, &[1.0, 2.0]), Err(SimError::InvalidInput(_))));
        assert!(p.full_gradient(&[]).is_err());
        assert!(p.oracle_query(1, &[1.0]).is_err());
    }

    #[test]
    fn constants_for_identical_clients() {
        let p = ProblemInstance::from_clients("same", vec![scalar(3.0, 1.0); 5]).unwrap();
        let s = estimate_constants(&p, &[0.3], &[-1.2]).unwrap();
        assert_eq!(s.delta, 0.0);
        assert_eq!(s.delta1, 0.0);
        assert!((s.l1 - 3.0).abs() < 1e-15);
    }

    #[test]
    fn constants_need_displacement() {
        let p = ProblemInstance::from_clients("same", vec![scalar(3.0, 1.0)]).unwrap();
        assert!(matches!(estimate_constants(&p, &[1.0], &[1.0]), Err(SimError::Degenerate(_))));
    }

    #[test]
    fn derived_quantities_at_extremes() {
        let c = SimilarityConstants::new(2.0, 1.0, 1.0).unwrap();
        assert_eq!(c.delta_m(10, 10), 0.0);
        assert!((c.delta_m(10, 1) - 2.0).abs() < 1e-15);
        assert_eq!(SimilarityConstants::q_m(1, 1), 0.0);
    }
}
