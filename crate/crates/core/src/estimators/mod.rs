//! Gradient estimators driven by a shared random subset per round.
//!
//! [`SagaState`] and [`SvrgState`] produce the conditionally unbiased estimate
//! `G^t`; [`RgState`] folds it into the recursive estimate `g^t` used by the solver.

mod rg;
mod saga;
mod svrg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use rg::{rg_saga_round, rg_step, rg_svrg_round, Inner, RgState};
pub use saga::{saga_init, SagaState};
pub use svrg::{svrg_init, svrg_step, SvrgState};

use crate::cost::{CostLedger, RoundHandle};
use crate::error::{check_dim, Result, SimError};
use crate::linalg::mean_of;
use crate::problems::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    RgSaga,
    RgSvrg,
    SvrgDirect,
    SagaDirect,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::RgSaga, Self::RgSvrg, Self::SvrgDirect, Self::SagaDirect];

    pub fn name(self) -> &'static str {
        match self {
            Self::RgSaga => "rg-saga",
            Self::RgSvrg => "rg-svrg",
            Self::SvrgDirect => "svrg-direct",
            Self::SagaDirect => "saga-direct",
        }
    }

    pub fn is_recursive(self) -> bool {
        matches!(self, Self::RgSaga | Self::RgSvrg)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::InvalidConfig(format!("unknown estimator {s:?}")))
    }
}

fn check_subset(problem: &ProblemInstance, s: &[usize]) -> Result<()> {
    if s.is_empty() {
        return Err(SimError::InvalidInput("empty client subset".into()));
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= problem.n()) {
        return Err(SimError::InvalidInput(format!("client {bad} out of range")));
    }
    Ok(())
}

/// `grad f_i(x)` for each `i` in `s`, in the order of `s`. Uncharged.
pub(crate) fn subset_gradients(problem: &ProblemInstance, s: &[usize], x: &[f64]) -> Vec<Vec<f64>> {
    s.iter().map(|&i| problem.grad(i, x)).collect()
}

/// `grad f_S(x)`; records one query per member of `s` on `handle`.
pub fn subset_mean_gradient(
    problem: &ProblemInstance,
    s: &[usize],
    x: &[f64],
    handle: &mut RoundHandle,
) -> Result<Vec<f64>> {
    check_subset(problem, s)?;
    check_dim(x, problem.dim())?;
    for &i in s {
        handle.record(i, 1)?;
    }
    let grads = subset_gradients(problem, s, x);
    Ok(mean_of(grads.iter().map(Vec::as_slice), problem.dim()))
}

/// Contacts every client through `ceil(n/m)` arbitrary rounds and returns the
/// per-client gradients at `x`.
pub fn full_sync_gradients(
    problem: &ProblemInstance,
    x: &[f64],
    ledger: &mut CostLedger,
) -> Result<Vec<Vec<f64>>> {
    check_dim(x, problem.dim())?;
    ledger.full_sync();
    Ok((0..problem.n()).map(|i| problem.grad(i, x)).collect())
}

/// `grad f(x)` through a full synchronization.
pub fn full_sync_gradient(problem: &ProblemInstance, x: &[f64], ledger: &mut CostLedger) -> Result<Vec<f64>> {
    let grads = full_sync_gradients(problem, x, ledger)?;
    Ok(mean_of(grads.iter().map(Vec::as_slice), problem.dim()))
}
