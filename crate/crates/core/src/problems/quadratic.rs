//! Diagonal quadratics with a log-sum penalty:
//! `f_i(x) = (1/b) sum_j 1/2 <A_ij (x - b_ij), x - b_ij> + sum_k log(1 + alpha |x_k|)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{log_penalty_value, ProblemInstance, SeparableQuadratic, SimilarityConstants};
use crate::error::{Result, SimError};
use crate::rng::{seeded, SimRng};
use crate::sampling::sample_subset;

/// Value assigned to the diagonal entries forced near zero.
pub const NEAR_ZERO_EIG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadLogSumParams {
    pub alpha: f64,
    /// Data points per client.
    pub b: usize,
    pub n: usize,
    pub d: usize,
    pub diag_base_range: (f64, f64),
    pub noise_range: (f64, f64),
    pub clip_range: (f64, f64),
    pub zero_eig_fraction: f64,
    /// Range of the coordinates of each `b_ij`.
    pub point_range: (f64, f64),
}

impl Default for QuadLogSumParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl QuadLogSumParams {
    pub fn reference() -> Self {
        Self {
            alpha: 10.0,
            b: 5,
            n: 100,
            d: 1000,
            diag_base_range: (0.0, 110.0),
            noise_range: (0.0, 18.0),
            clip_range: (1.0, 100.0),
            zero_eig_fraction: 0.05,
            point_range: (0.0, 10.0),
        }
    }

    /// Same ranges at a smaller size.
    pub fn desk(n: usize, d: usize) -> Self {
        Self { n, d, ..Self::reference() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.n == 0 || self.d == 0 || self.b == 0 {
            return bad("n, d and b must be positive".into());
        }
        for (name, (lo, hi)) in [
            ("diag_base_range", self.diag_base_range),
            ("noise_range", self.noise_range),
            ("clip_range", self.clip_range),
            ("point_range", self.point_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} = ({lo}, {hi}) is not an interval"));
            }
        }
        if self.clip_range.0 < 0.0 {
            return bad("clip_range must lie in [0, inf)".into());
        }
        if !(0.0..=1.0).contains(&self.zero_eig_fraction) {
            return bad(format!("zero_eig_fraction {} not in [0, 1]", self.zero_eig_fraction));
        }
        Ok(())
    }

    fn zero_count(&self) -> usize {
        (self.zero_eig_fraction * self.d as f64).round() as usize
    }
}

/// A generated instance with its raw data and analytic constants.
#[derive(Debug, Clone)]
pub struct QuadLogSumInstance {
    pub params: QuadLogSumParams,
    pub problem: ProblemInstance,
    /// `diagonals[i][j]` is the diagonal of `A_ij`.
    pub diagonals: Vec<Vec<Vec<f64>>>,
    /// Per-client averaged curvature `(1/b) sum_j A_ij`.
    pub curvature: Vec<Vec<f64>>,
    pub constants: SimilarityConstants,
    /// Exact global minimizer and value.
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

pub fn gen_quadratic_logsum(params: &QuadLogSumParams, seed: u64) -> Result<ProblemInstance> {
    Ok(QuadLogSumInstance::generate(params, seed)?.problem)
}

fn uniform(rng: &mut SimRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

impl QuadLogSumInstance {
    pub fn generate(params: &QuadLogSumParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let QuadLogSumParams { n, d, b, alpha, .. } = *params;
        let mut rng = seeded(seed);
        let base: Vec<f64> = (0..d).map(|_| uniform(&mut rng, params.diag_base_range)).collect();
        let zeros = params.zero_count();
        let (lo, hi) = params.clip_range;

        let mut diagonals = Vec::with_capacity(n);
        let mut clients = Vec::with_capacity(n);
        let mut curvature = Vec::with_capacity(n);
        for _ in 0..n {
            let mut a = vec![0.0; d];
            let mut c = vec![0.0; d];
            let mut e = 0.0;
            let mut mats = Vec::with_capacity(b);
            for _ in 0..b {
                let mut diag: Vec<f64> = base
                    .iter()
                    .map(|&v| (v + uniform(&mut rng, params.noise_range)).clamp(lo, hi))
                    .collect();
                for k in sample_subset(d, zeros, &mut rng) {
                    diag[k] = NEAR_ZERO_EIG;
                }
                for k in 0..d {
                    let bk = uniform(&mut rng, params.point_range);
                    a[k] += diag[k];
                    c[k] += diag[k] * bk;
                    e += 0.5 * diag[k] * bk * bk;
                }
                mats.push(diag);
            }
            let inv_b = 1.0 / b as f64;
            a.iter_mut().chain(c.iter_mut()).for_each(|v| *v *= inv_b);
            clients.push(
                SeparableQuadratic::new(a.clone(), c)
                    .with_offset(e * inv_b)
                    .with_log_penalty(alpha),
            );
            curvature.push(a);
            diagonals.push(mats);
        }

        let constants = analytic_constants(&curvature, alpha);
        let (x_star, f_star) = exact_minimum(&clients, alpha);
        let problem = ProblemInstance::from_clients("quadratic-logsum", clients)?.with_lower_bound(f_star);
        Ok(Self { params: params.clone(), problem, diagonals, curvature, constants, x_star, f_star })
    }
}

/// Bounds from the diagonal curvatures. The penalty cancels in every `h_i`, so
/// `Delta_1` and `delta` are exact; the penalty contributes curvature in
/// `[-alpha^2, 0)` away from the origin, which enters `L_1` and `L_max`.
fn analytic_constants(curv: &[Vec<f64>], alpha: f64) -> SimilarityConstants {
    let n = curv.len();
    let d = curv[0].len();
    let a2 = alpha * alpha;
    let smooth = |a: f64| a.abs().max((a - a2).abs());
    let mut delta_sq: f64 = 0.0;
    let mut delta1: f64 = 0.0;
    let mut delta_max: f64 = 0.0;
    for k in 0..d {
        let mean = curv.iter().map(|a| a[k]).sum::<f64>() / n as f64;
        let var = curv.iter().map(|a| (a[k] - mean).powi(2)).sum::<f64>() / n as f64;
        delta_sq = delta_sq.max(var);
        delta1 = delta1.max((mean - curv[0][k]).abs());
        for a in curv {
            delta_max = delta_max.max((mean - a[k]).abs());
        }
    }
    let l1 = curv[0].iter().copied().map(smooth).fold(0.0, f64::max);
    let lmax = curv.iter().flatten().copied().map(smooth).fold(0.0, f64::max);
    SimilarityConstants {
        delta: delta_sq.sqrt(),
        delta1,
        l1,
        lmax: Some(lmax),
        delta_max: Some(delta_max),
    }
}

/// Minimizer of `a x^2 / 2 - c x + log(1 + alpha |x|)` over the real line, for `a > 0`.
pub fn scalar_minimizer(a: f64, c: f64, alpha: f64) -> f64 {
    let phi = |x: f64| 0.5 * a * x * x - c * x + log_penalty_value(alpha, x);
    let mut best = 0.0;
    let mut best_val = phi(0.0);
    let mut consider = |x: f64| {
        if x.is_finite() && phi(x) < best_val {
            best_val = phi(x);
            best = x;
        }
    };
    // Stationarity on x > 0 and x < 0 after clearing the denominator.
    for x in quadratic_roots(a * alpha, a - c * alpha, alpha - c) {
        if x > 0.0 {
            consider(x);
        }
    }
    for x in quadratic_roots(-a * alpha, a + c * alpha, -(c + alpha)) {
        if x < 0.0 {
            consider(x);
        }
    }
    best
}

fn quadratic_roots(qa: f64, qb: f64, qc: f64) -> Vec<f64> {
    if qa == 0.0 {
        return if qb == 0.0 { vec![] } else { vec![-qc / qb] };
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return vec![];
    }
    // Cancellation-free form.
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / qa, qc / q]
}

fn exact_minimum(clients: &[SeparableQuadratic], alpha: f64) -> (Vec<f64>, f64) {
    let n = clients.len() as f64;
    let d = clients[0].curvature.len();
    let mut x = vec![0.0; d];
    let mut value = clients.iter().map(|c| c.offset).sum::<f64>() / n;
    for (k, xk) in x.iter_mut().enumerate() {
        let a = clients.iter().map(|c| c.curvature[k]).sum::<f64>() / n;
        let c = clients.iter().map(|c| c.linear[k]).sum::<f64>() / n;
        *xk = scalar_minimizer(a, c, alpha);
        value += 0.5 * a * *xk * *xk - c * *xk + log_penalty_value(alpha, *xk);
    }
    (x, value)
}
