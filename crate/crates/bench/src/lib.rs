//! Fixtures shared by the criterion benches.

use fedcgm_core::{QuadLogSumInstance, QuadLogSumParams};

/// Desk-size quadratic instance used by every bench.
pub fn bench_instance(n: usize, d: usize) -> QuadLogSumInstance {
    QuadLogSumInstance::generate(&QuadLogSumParams::desk(n, d), 7).expect("valid bench parameters")
}

/// Starting point away from the penalty's kink.
pub fn start_point(d: usize) -> Vec<f64> {
    vec![10.0; d]
}
