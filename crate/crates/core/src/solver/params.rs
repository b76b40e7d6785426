//! Parameter choices: the theory-grade defaults for RG-SAGA and RG-SVRG and the
//! lighter experiment settings.

use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::problems::SimilarityConstants;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgSagaParams {
    pub lambda: f64,
    pub beta: f64,
    pub p: f64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgSvrgParams {
    pub lambda: f64,
    pub beta: f64,
    pub p: f64,
    pub p_b: f64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub lambda: f64,
    pub beta: f64,
    pub p: f64,
    /// Local smoothness used by the delegate's steps.
    pub eta: f64,
}

fn check_common(delta1: f64, delta: f64, n: usize, m: usize, l1: f64) -> Result<()> {
    if !(delta1 >= 0.0 && delta >= 0.0 && l1 > 0.0) {
        return Err(SimError::InvalidInput(format!(
            "need Delta_1 >= 0, delta >= 0, L_1 > 0 (got {delta1}, {delta}, {l1})"
        )));
    }
    if m == 0 || m > n {
        return Err(SimError::InvalidInput(format!("need 1 <= m <= n (got m = {m}, n = {n})")));
    }
    Ok(())
}

fn check_budget(f0: f64, epsilon: f64) -> Result<()> {
    if !(f0 >= 0.0 && epsilon > 0.0) {
        return Err(SimError::InvalidInput(format!("need F0 >= 0 and epsilon > 0 (got {f0}, {epsilon})")));
    }
    Ok(())
}

fn ceil_u64(v: f64) -> u64 {
    v.ceil().max(0.0) as u64
}

/// `p = (lambda - Delta_1) / (8 (L_1 + lambda))`
pub fn geometric_p(lambda: f64, delta1: f64, l1: f64) -> Result<f64> {
    if lambda <= delta1 {
        return Err(SimError::Degenerate(format!("lambda = {lambda} does not exceed Delta_1 = {delta1}")));
    }
    Ok((lambda - delta1) / (8.0 * (l1 + lambda)))
}

/// `K = ceil(8 L_1 T / (lambda - Delta_1))`
pub fn fixed_local_steps(l1: f64, t: u64, lambda: f64, delta1: f64) -> Result<u64> {
    if lambda <= delta1 {
        return Err(SimError::Degenerate(format!("lambda = {lambda} does not exceed Delta_1 = {delta1}")));
    }
    Ok(ceil_u64(8.0 * l1 * t as f64 / (lambda - delta1)).max(1))
}

pub fn default_params_rg_saga(
    delta1: f64,
    delta: f64,
    n: usize,
    m: usize,
    l1: f64,
    f0: f64,
    epsilon: f64,
) -> Result<RgSagaParams> {
    check_common(delta1, delta, n, m, l1)?;
    check_budget(f0, epsilon)?;
    let n_m = SimilarityConstants::n_m(n, m);
    let delta_m = (SimilarityConstants::q_m(n, m) / m as f64).sqrt() * delta;
    let lambda = 3.0 * delta1 + 113.0 * n_m.sqrt() * delta_m;
    let beta = 1.0 / (112.0 * n_m);
    let p = geometric_p(lambda, delta1, l1)?;
    let t = ceil_u64(256.0 * (delta1 + 38.0 * n_m.sqrt() * delta_m) * f0 / (epsilon * epsilon));
    Ok(RgSagaParams { lambda, beta, p, t })
}

/// `p_B = c_r / (c_a ceil(n/m))`
pub fn anchor_probability(c_a: Rational64, c_r: Rational64, n: usize, m: usize) -> Result<f64> {
    if c_r > c_a || c_r < Rational64::from_integer(1) {
        return Err(SimError::InvalidInput(format!("need 1 <= c_r <= c_a (got {c_r}, {c_a})")));
    }
    let rounds = Rational64::from_integer(n.div_ceil(m) as i64);
    Ok((c_r / (c_a * rounds)).to_f64().expect("finite ratio"))
}

#[allow(clippy::too_many_arguments)]
pub fn default_params_rg_svrg(
    delta1: f64,
    delta: f64,
    n: usize,
    m: usize,
    l1: f64,
    c_a: Rational64,
    c_r: Rational64,
    f0: f64,
    epsilon: f64,
) -> Result<RgSvrgParams> {
    check_common(delta1, delta, n, m, l1)?;
    check_budget(f0, epsilon)?;
    let p_b = anchor_probability(c_a, c_r, n, m)?;
    let delta_m = (SimilarityConstants::q_m(n, m) / m as f64).sqrt() * delta;
    let lambda = 3.0 * delta1 + 22.0 * delta_m / p_b.sqrt();
    let beta = p_b / 2.0;
    let p = geometric_p(lambda, delta1, l1)?;
    let t = ceil_u64(256.0 * (delta1 + 8.0 * delta_m / p_b.sqrt()) * f0 / (epsilon * epsilon));
    Ok(RgSvrgParams { lambda, beta, p, p_b, t })
}

/// `p = delta / L` (capped at 1), `lambda = sqrt(n)/m delta + Delta_1`,
/// `beta = m / n`, `eta = 2 L`.
pub fn experiment_params(delta: f64, delta1: f64, l: f64, n: usize, m: usize) -> Result<ExperimentParams> {
    check_common(delta1, delta, n, m, l)?;
    let lambda = (n as f64).sqrt() / m as f64 * delta + delta1;
    if lambda <= 0.0 {
        return Err(SimError::Degenerate("delta = Delta_1 = 0 gives lambda = 0".into()));
    }
    Ok(ExperimentParams {
        lambda,
        beta: m as f64 / n as f64,
        p: (delta / l).min(1.0),
        eta: 2.0 * l,
    })
}
