use crate::cost::{CostLedger, RoundHandle};
use crate::error::{check_dim, Result, SimError};
use crate::linalg::mean_of;
use crate::problems::ProblemInstance;
use crate::rng::SimRng;
use crate::sampling::sample_bernoulli;

use super::{check_subset, full_sync_gradient, subset_gradients};

/// Loopless SVRG: anchor `w`, its full gradient, and the refresh probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgState {
    pub anchor: Vec<f64>,
    pub anchor_grad: Vec<f64>,
    pub p_b: f64,
}

/// One full synchronization at `x0`, which becomes the first anchor.
pub fn svrg_init(problem: &ProblemInstance, x0: &[f64], p_b: f64, ledger: &mut CostLedger) -> Result<SvrgState> {
    check_p_b(p_b)?;
    let anchor_grad = full_sync_gradient(problem, x0, ledger)?;
    Ok(SvrgState { anchor: x0.to_vec(), anchor_grad, p_b })
}

fn check_p_b(p_b: f64) -> Result<()> {
    if !(p_b > 0.0 && p_b <= 1.0) {
        return Err(SimError::InvalidConfig(format!("p_B must lie in (0, 1], got {p_b}")));
    }
    Ok(())
}

impl SvrgState {
    /// Anchor at `w` with its exact full gradient, without charging anything.
    pub fn at(problem: &ProblemInstance, w: &[f64], p_b: f64) -> Result<Self> {
        check_p_b(p_b)?;
        Ok(Self { anchor: w.to_vec(), anchor_grad: problem.full_gradient(w)?, p_b })
    }

    /// Draws `omega_t`.
    pub fn draw_refresh(&self, rng: &mut SimRng) -> bool {
        sample_bernoulli(self.p_b, rng)
    }

    /// Moves the anchor to `x` through a full synchronization.
    pub fn refresh(&mut self, problem: &ProblemInstance, x: &[f64], ledger: &mut CostLedger) -> Result<()> {
        self.anchor_grad = full_sync_gradient(problem, x, ledger)?;
        self.anchor.clear();
        self.anchor.extend_from_slice(x);
        Ok(())
    }

    /// `grad f_S(x) + grad f(w) - grad f_S(w)` from per-member gradients at `x` and `w`.
    pub fn estimate(&self, at_x: &[Vec<f64>], at_w: &[Vec<f64>]) -> Vec<f64> {
        let d = self.anchor_grad.len();
        let gx = mean_of(at_x.iter().map(Vec::as_slice), d);
        let gw = mean_of(at_w.iter().map(Vec::as_slice), d);
        gx.iter().zip(&self.anchor_grad).zip(&gw).map(|((a, b), c)| a + b - c).collect()
    }

    /// Estimate from the members of `s`, two queries each. Uncharged.
    pub fn estimate_at(&self, problem: &ProblemInstance, x: &[f64], s: &[usize]) -> Vec<f64> {
        self.estimate(&subset_gradients(problem, s, x), &subset_gradients(problem, s, &self.anchor))
    }
}

/// `svrg_step`. `omega_t` is drawn first; on a refresh the new anchor's full
/// gradient is the estimate and no subset queries are made.
pub fn svrg_step(
    state: &mut SvrgState,
    problem: &ProblemInstance,
    x_t: &[f64],
    s: &[usize],
    rng: &mut SimRng,
    ledger: &mut CostLedger,
    handle: &mut RoundHandle,
) -> Result<Vec<f64>> {
    check_subset(problem, s)?;
    check_dim(x_t, problem.dim())?;
    if state.draw_refresh(rng) {
        state.refresh(problem, x_t, ledger)?;
        return Ok(state.anchor_grad.clone());
    }
    for &i in s {
        handle.record(i, 2)?;
    }
    Ok(state.estimate_at(problem, x_t, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostConfig;
    use crate::problems::SeparableQuadratic;
    use crate::rng::seeded;

    fn problem() -> ProblemInstance {
        let clients = (0..4)
            .map(|i| SeparableQuadratic::new(vec![1.0 + i as f64, 2.0], vec![i as f64, -1.0]))
            .collect();
        ProblemInstance::from_clients("q", clients).unwrap()
    }

    #[test]
    fn current_anchor_is_exact() {
        let p = problem();
        let x = [0.3, -0.7];
        let s = SvrgState::at(&p, &x, 0.5).unwrap();
        let g = s.estimate_at(&p, &x, &[1, 2]);
        let full = p.full_gradient(&x).unwrap();
        for (a, b) in g.iter().zip(&full) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn full_participation_is_exact() {
        let p = problem();
        let s = SvrgState::at(&p, &[5.0, 5.0], 0.5).unwrap();
        let x = [0.3, -0.7];
        let g = s.estimate_at(&p, &x, &[0, 1, 2, 3]);
        let full = p.full_gradient(&x).unwrap();
        for (a, b) in g.iter().zip(&full) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn certain_refresh_syncs_every_step() {
        let p = problem();
        let mut l = CostLedger::new(CostConfig::unit(2), 4).unwrap();
        let mut st = svrg_init(&p, &[0.0, 0.0], 1.0, &mut l).unwrap();
        let mut rng = seeded(0);
        for t in 1..=3 {
            let x = [t as f64, 0.0];
            let (s, mut h) = l.select_random(&mut rng);
            let g = svrg_step(&mut st, &p, &x, &s, &mut rng, &mut l, &mut h).unwrap();
            assert_eq!(g, p.full_gradient(&x).unwrap());
            assert_eq!(h.round_local_cost(), 0);
            l.close_round(h);
        }
        assert_eq!(l.n_a(), 2 * 4);
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(SvrgState::at(&problem(), &[0.0, 0.0], 0.0).is_err());
        assert!(SvrgState::at(&problem(), &[0.0, 0.0], 1.5).is_err());
    }
}
