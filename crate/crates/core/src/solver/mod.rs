//! Inexact composite gradient method: outer loop, delegate-side local solvers and
//! parameter rules.

mod icgm;
mod local;
mod params;

pub use icgm::{run_icgm, IterDiag, RunOutput, SolverConfig};
pub use local::{
    cgm_const, cgm_rand, local_cgm_step, subproblem_decrease, subproblem_gradient, ContractStats, LocalOutcome,
    LocalSolver, Subproblem,
};
pub(crate) use local::solve_subproblem;
pub use params::{
    anchor_probability, default_params_rg_saga, default_params_rg_svrg, experiment_params, fixed_local_steps,
    geometric_p, ExperimentParams, RgSagaParams, RgSvrgParams,
};
