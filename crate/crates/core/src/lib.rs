//! Simulation of federated nonconvex optimization under a cost-aware client
//! selection model.
//!
//! Clients hold local objectives `f_i` and are reached through three kinds of
//! rounds (arbitrary, random, delegate) whose costs are tracked exactly by
//! [`CostLedger`]. [`run_icgm`] runs the inexact composite gradient method with
//! SAGA, SVRG and recursive-gradient estimators; [`baselines`] holds the reference
//! methods and [`verification`] the brute-force and statistical oracles.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod baselines;
pub mod cost;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod sampling;
pub mod solver;
pub mod trace;
pub mod verification;

pub use cost::{CostConfig, CostLedger, CostTotals, RoundHandle, Strategy};
pub use error::{Result, SimError};
pub use estimators::EstimatorKind;
pub use problems::quadratic::{gen_quadratic_logsum, QuadLogSumInstance, QuadLogSumParams};
pub use problems::{ClientObjective, ProblemInstance, SimilarityConstants};
pub use solver::{run_icgm, LocalSolver, RunOutput, SolverConfig};
pub use trace::{RunTrace, TraceRow};
