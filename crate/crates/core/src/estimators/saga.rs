use crate::cost::{CostLedger, RoundHandle};
use crate::error::{check_dim, Result, SimError};
use crate::linalg::{dist_sq, mean_of, norm_sq};
use crate::problems::ProblemInstance;

use super::{check_subset, full_sync_gradients, subset_gradients};

/// Per-client table `b_i` and its mean `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SagaState {
    pub table: Vec<Vec<f64>>,
    pub aggregate: Vec<f64>,
    /// Estimate already known exactly for the current iteration (set by a
    /// synchronization); consumed by the next step instead of a table update.
    pub(crate) exact: Option<Vec<f64>>,
}

/// Two full synchronizations at `x0` and `x1`. Afterwards the table holds the
/// gradients at `x1` and the aggregate equals `grad f(x1)`.
pub fn saga_init(
    problem: &ProblemInstance,
    x0: &[f64],
    x1: &[f64],
    ledger: &mut CostLedger,
) -> Result<SagaState> {
    let mut state = SagaState::synced(problem, x0, ledger)?;
    state.sync(problem, x1, ledger)?;
    Ok(state)
}

impl SagaState {
    pub fn from_table(table: Vec<Vec<f64>>) -> Result<Self> {
        let d = table.first().map(Vec::len).ok_or_else(|| SimError::InvalidInput("empty table".into()))?;
        if table.iter().any(|b| b.len() != d) {
            return Err(SimError::InvalidInput("ragged table".into()));
        }
        let aggregate = mean_of(table.iter().map(Vec::as_slice), d);
        Ok(Self { table, aggregate, exact: None })
    }

    /// State after one full synchronization at `x`.
    pub fn synced(problem: &ProblemInstance, x: &[f64], ledger: &mut CostLedger) -> Result<Self> {
        let mut s = Self::from_table(full_sync_gradients(problem, x, ledger)?)?;
        s.exact = Some(s.aggregate.clone());
        Ok(s)
    }

    /// Refills the table at `x` through a full synchronization.
    pub fn sync(&mut self, problem: &ProblemInstance, x: &[f64], ledger: &mut CostLedger) -> Result<()> {
        *self = Self::synced(problem, x, ledger)?;
        Ok(())
    }

    /// Table initialized from one random subset: members store their own gradient,
    /// everyone else stores the subset mean. The aggregate is the subset mean.
    pub fn from_subset(n: usize, s: &[usize], grads: &[Vec<f64>]) -> Self {
        let d = grads[0].len();
        let mean = mean_of(grads.iter().map(Vec::as_slice), d);
        let mut table = vec![mean.clone(); n];
        for (&i, g) in s.iter().zip(grads) {
            table[i] = g.clone();
        }
        Self { table, aggregate: mean.clone(), exact: Some(mean) }
    }

    pub fn n(&self) -> usize {
        self.table.len()
    }

    pub fn dim(&self) -> usize {
        self.aggregate.len()
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// `G^t = grad f_S(x^t) - b_S^{t-1} + b^{t-1}` without mutating the state.
    /// `grads[j]` is the gradient of client `s[j]` at `x^t`.
    pub fn estimate(&self, s: &[usize], grads: &[Vec<f64>]) -> Vec<f64> {
        let inv_m = 1.0 / s.len() as f64;
        let mut g = self.aggregate.clone();
        for (&i, gi) in s.iter().zip(grads) {
            for ((o, new), old) in g.iter_mut().zip(gi).zip(&self.table[i]) {
                *o += inv_m * (new - old);
            }
        }
        g
    }

    /// `b^t = b^{t-1} + (1/n_m)[grad f_S(x^t) - b_S^{t-1}]`, then the table entries.
    pub fn apply(&mut self, s: &[usize], grads: &[Vec<f64>]) {
        let m = s.len() as f64;
        let n = self.n() as f64;
        let d = self.dim();
        let mut diff = vec![0.0; d];
        for (&i, gi) in s.iter().zip(grads) {
            for ((o, new), old) in diff.iter_mut().zip(gi).zip(&self.table[i]) {
                *o += new - old;
            }
        }
        let inv_n_m = m / n;
        for (a, v) in self.aggregate.iter_mut().zip(&diff) {
            *a += inv_n_m * (v / m);
        }
        for (&i, gi) in s.iter().zip(grads) {
            self.table[i].clone_from(gi);
        }
    }

    /// `saga_step`: one query per member of `s` at `x_t`.
    pub fn step(
        &mut self,
        problem: &ProblemInstance,
        x_t: &[f64],
        s: &[usize],
        handle: &mut RoundHandle,
    ) -> Result<Vec<f64>> {
        check_subset(problem, s)?;
        check_dim(x_t, self.dim())?;
        for &i in s {
            handle.record(i, 1)?;
        }
        let grads = subset_gradients(problem, s, x_t);
        Ok(self.step_with(s, &grads))
    }

    /// Consumes a pending exact estimate if there is one, otherwise updates the table.
    pub(crate) fn step_with(&mut self, s: &[usize], grads: &[Vec<f64>]) -> Vec<f64> {
        if let Some(g) = self.exact.take() {
            return g;
        }
        let g = self.estimate(s, grads);
        self.apply(s, grads);
        g
    }

    /// Relative gap between the running aggregate and the table mean.
    pub fn aggregate_drift(&self) -> f64 {
        let mean = mean_of(self.table.iter().map(Vec::as_slice), self.dim());
        dist_sq(&mean, &self.aggregate).sqrt() / norm_sq(&mean).sqrt().max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostConfig;
    use crate::problems::SeparableQuadratic;
    use crate::rng::seeded;
    use rand::Rng;

    fn problem(n: usize, d: usize, seed: u64) -> ProblemInstance {
        let mut rng = seeded(seed);
        let clients = (0..n)
            .map(|_| {
                SeparableQuadratic::new(
                    (0..d).map(|_| rng.random_range(0.5..3.0)).collect(),
                    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        ProblemInstance::from_clients("q", clients).unwrap()
    }

    #[test]
    fn init_charges_two_syncs() {
        let p = problem(10, 2, 0);
        let mut l = CostLedger::new(CostConfig::unit(3), 10).unwrap();
        let s = saga_init(&p, &[0.0, 0.0], &[1.0, -1.0], &mut l).unwrap();
        assert_eq!(l.n_a(), 8);
        assert_eq!(s.aggregate, p.full_gradient(&[1.0, -1.0]).unwrap());
    }

    #[test]
    fn fresh_table_gives_exact_gradient() {
        let p = problem(5, 3, 1);
        let x = [0.2, 0.4, -0.3];
        let mut s = SagaState::from_table(p.client_gradients(&x).unwrap()).unwrap();
        let sub = [1, 3];
        let grads = subset_gradients(&p, &sub, &x);
        let g = s.step_with(&sub, &grads);
        let full = p.full_gradient(&x).unwrap();
        for (a, b) in g.iter().zip(&full) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn full_participation_is_exact() {
        let p = problem(4, 2, 2);
        let mut s = SagaState::from_table(p.client_gradients(&[3.0, 1.0]).unwrap()).unwrap();
        let x = [-1.0, 0.5];
        let all = [0, 1, 2, 3];
        let g = s.step_with(&all, &subset_gradients(&p, &all, &x));
        let full = p.full_gradient(&x).unwrap();
        for (a, b) in g.iter().zip(&full) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn aggregate_tracks_table() {
        let p = problem(8, 4, 3);
        let mut rng = seeded(9);
        let mut s = SagaState::from_table(p.client_gradients(&[0.0; 4]).unwrap()).unwrap();
        for _ in 0..500 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            let sub = crate::sampling::sample_subset(8, 3, &mut rng);
            s.step_with(&sub, &subset_gradients(&p, &sub, &x));
            assert!(s.aggregate_drift() < 1e-12);
        }
    }

    #[test]
    fn pending_exact_is_used_once() {
        let p = problem(4, 1, 4);
        let mut l = CostLedger::new(CostConfig::unit(2), 4).unwrap();
        let mut s = SagaState::synced(&p, &[1.0], &mut l).unwrap();
        let sub = [0, 2];
        let first = s.step_with(&sub, &subset_gradients(&p, &sub, &[5.0]));
        assert_eq!(first, p.full_gradient(&[1.0]).unwrap());
        assert!(!s.has_exact());
    }
}
