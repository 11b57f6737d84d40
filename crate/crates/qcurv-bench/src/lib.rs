//! Shared inputs for the benchmarks.

use qcurv::solver::{Case, SolveRequest};

/// The case (b) request used across benches.
pub fn case_b_request() -> SolveRequest {
    let lam = 8.0 * std::f64::consts::PI.powi(2);
    SolveRequest::new(4, lam, 0.0, vec![-1.0], vec![], Case::B)
}
