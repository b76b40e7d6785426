use crate::cost::{CostLedger, RoundHandle};
use crate::error::{check_dim, Result, SimError};
use crate::linalg::mean_of;
use crate::problems::ProblemInstance;
use crate::rng::SimRng;

use super::{check_subset, subset_gradients, SagaState, SvrgState};

#[derive(Debug, Clone, PartialEq)]
pub enum Inner {
    Saga(SagaState),
    Svrg(SvrgState),
}

/// Recursive estimate `g^t` with momentum `beta` over an inner estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RgState {
    pub g: Vec<f64>,
    pub beta: f64,
    pub inner: Inner,
    /// Inner estimate `G^t` used by the last round.
    pub last_inner: Option<Vec<f64>>,
}

impl RgState {
    pub fn new(g0: Vec<f64>, beta: f64, inner: Inner) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(SimError::InvalidConfig(format!("beta must lie in (0, 1], got {beta}")));
        }
        Ok(Self { g: g0, beta, inner, last_inner: None })
    }

    /// `g <- (1 - beta) g + beta G + next - curr`
    pub fn step(&mut self, big_g: &[f64], next: &[f64], curr: &[f64]) -> Result<&[f64]> {
        let d = self.g.len();
        for v in [big_g, next, curr] {
            check_dim(v, d)?;
        }
        let b = self.beta;
        for k in 0..d {
            self.g[k] = (1.0 - b) * self.g[k] + b * big_g[k] + next[k] - curr[k];
        }
        Ok(&self.g)
    }
}

/// `rg_step` on a detached state.
pub fn rg_step(state: &mut RgState, big_g: &[f64], grad_s_next: &[f64], grad_s_curr: &[f64]) -> Result<Vec<f64>> {
    Ok(state.step(big_g, grad_s_next, grad_s_curr)?.to_vec())
}

fn round_gradients(
    problem: &ProblemInstance,
    s: &[usize],
    x_t: &[f64],
    x_next: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_subset(problem, s)?;
    check_dim(x_t, problem.dim())?;
    check_dim(x_next, problem.dim())?;
    Ok((subset_gradients(problem, s, x_t), subset_gradients(problem, s, x_next)))
}

fn finish(state: &mut RgState, big_g: Vec<f64>, at_t: &[Vec<f64>], at_next: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = state.g.len();
    let curr = mean_of(at_t.iter().map(Vec::as_slice), d);
    let next = mean_of(at_next.iter().map(Vec::as_slice), d);
    state.step(&big_g, &next, &curr)?;
    state.last_inner = Some(big_g);
    Ok(state.g.clone())
}

/// SAGA inner estimate at `x_t` and the recursive update, both from the clients
/// of `s`. Two queries per client.
pub fn rg_saga_round(
    state: &mut RgState,
    problem: &ProblemInstance,
    x_t: &[f64],
    x_next: &[f64],
    s: &[usize],
    handle: &mut RoundHandle,
) -> Result<Vec<f64>> {
    let (at_t, at_next) = round_gradients(problem, s, x_t, x_next)?;
    let Inner::Saga(saga) = &mut state.inner else {
        return Err(SimError::InvalidConfig("rg_saga_round needs a SAGA inner estimator".into()));
    };
    for &i in s {
        handle.record(i, 2)?;
    }
    let big_g = saga.step_with(s, &at_t);
    finish(state, big_g, &at_t, &at_next)
}

/// SVRG inner estimate at `x_t` and the recursive update. Three queries per client
/// (`x_next`, `x_t`, `w`), or two when the anchor is refreshed to `x_t`.
#[allow(clippy::too_many_arguments)]
pub fn rg_svrg_round(
    state: &mut RgState,
    problem: &ProblemInstance,
    x_t: &[f64],
    x_next: &[f64],
    s: &[usize],
    rng: &mut SimRng,
    ledger: &mut CostLedger,
    handle: &mut RoundHandle,
) -> Result<Vec<f64>> {
    let (at_t, at_next) = round_gradients(problem, s, x_t, x_next)?;
    let Inner::Svrg(svrg) = &mut state.inner else {
        return Err(SimError::InvalidConfig("rg_svrg_round needs an SVRG inner estimator".into()));
    };
    let big_g = if svrg.draw_refresh(rng) {
        svrg.refresh(problem, x_t, ledger)?;
        for &i in s {
            handle.record(i, 2)?;
        }
        svrg.anchor_grad.clone()
    } else {
        for &i in s {
            handle.record(i, 3)?;
        }
        let at_w = subset_gradients(problem, s, &svrg.anchor);
        svrg.estimate(&at_t, &at_w)
    };
    finish(state, big_g, &at_t, &at_next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostConfig;
    use crate::problems::SeparableQuadratic;
    use crate::rng::seeded;

    fn problem() -> ProblemInstance {
        let clients = (0..4)
            .map(|i| SeparableQuadratic::new(vec![1.0 + i as f64], vec![2.0 - i as f64]))
            .collect();
        ProblemInstance::from_clients("q", clients).unwrap()
    }

    fn dummy_inner() -> Inner {
        Inner::Saga(SagaState::from_table(vec![vec![0.0]]).unwrap())
    }

    #[test]
    fn beta_one_full_set_telescopes() {
        let p = problem();
        let (x, y) = ([0.5], [-1.5]);
        let mut st = RgState::new(vec![123.0], 1.0, dummy_inner()).unwrap();
        let g = rg_step(
            &mut st,
            &p.full_gradient(&x).unwrap(),
            &p.full_gradient(&y).unwrap(),
            &p.full_gradient(&x).unwrap(),
        )
        .unwrap();
        assert!((g[0] - p.full_gradient(&y).unwrap()[0]).abs() < 1e-14);
    }

    #[test]
    fn standing_still_is_a_fixed_point() {
        let mut st = RgState::new(vec![1.25, -2.0], 0.3, dummy_inner()).unwrap();
        let g = rg_step(&mut st, &[1.25, -2.0], &[7.0, 7.0], &[7.0, 7.0]).unwrap();
        assert_eq!(g, vec![1.25, -2.0]);
    }

    #[test]
    fn saga_round_with_full_participation() {
        let p = problem();
        let (x, y) = ([0.5], [2.0]);
        let table = p.client_gradients(&[9.0]).unwrap();
        let inner = Inner::Saga(SagaState::from_table(table).unwrap());
        let beta = 0.4;
        let mut st = RgState::new(vec![3.0], beta, inner).unwrap();
        let mut l = CostLedger::new(CostConfig::unit(4), 4).unwrap();
        let mut h = l.select_arbitrary(&[0, 1, 2, 3]).unwrap();
        let g = rg_saga_round(&mut st, &p, &x, &y, &[0, 1, 2, 3], &mut h).unwrap();
        assert_eq!(h.round_local_cost(), 2);
        l.close_round(h);
        let fx = p.full_gradient(&x).unwrap()[0];
        let fy = p.full_gradient(&y).unwrap()[0];
        let expect = (1.0 - beta) * 3.0 + beta * fx + fy - fx;
        assert!((g[0] - expect).abs() < 1e-13);
    }

    #[test]
    fn svrg_round_query_counts() {
        let p = problem();
        let mut l = CostLedger::new(CostConfig::unit(2), 4).unwrap();
        let svrg = SvrgState::at(&p, &[0.0], 1e-9).unwrap();
        let mut st = RgState::new(vec![0.0], 0.5, Inner::Svrg(svrg)).unwrap();
        let mut rng = seeded(4);
        let (s, mut h) = l.select_random(&mut rng);
        rg_svrg_round(&mut st, &p, &[1.0], &[2.0], &s, &mut rng, &mut l, &mut h).unwrap();
        assert_eq!(h.round_local_cost(), 3);
        l.close_round(h);
        assert_eq!(l.n_a(), 0);

        let svrg = SvrgState::at(&p, &[0.0], 1.0).unwrap();
        let mut st = RgState::new(vec![0.0], 0.5, Inner::Svrg(svrg)).unwrap();
        let (s, mut h) = l.select_random(&mut rng);
        rg_svrg_round(&mut st, &p, &[1.0], &[2.0], &s, &mut rng, &mut l, &mut h).unwrap();
        assert_eq!(h.round_local_cost(), 2);
        l.close_round(h);
        assert_eq!(l.n_a(), 2);
    }

    #[test]
    fn wrong_inner_is_rejected() {
        let p = problem();
        let mut l = CostLedger::new(CostConfig::unit(1), 4).unwrap();
        let mut st = RgState::new(vec![0.0], 0.5, dummy_inner()).unwrap();
        let mut h = l.select_arbitrary(&[0]).unwrap();
        let mut rng = seeded(0);
        assert!(rg_svrg_round(&mut st, &p, &[0.0], &[1.0], &[0], &mut rng, &mut l, &mut h).is_err());
        l.close_round(h);
    }
}
