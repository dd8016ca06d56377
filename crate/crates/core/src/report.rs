//! Per-attempt outcome record shared by the static and dynamic optimizers.

use alloc::vec::Vec;

/// What one optimization attempt did: the normalized errors of the tracked
/// observables, how many Newton iterations ran, how far the optimized vector
/// moved relative to its reference, wall time (filled in by callers that
/// measure it; the core leaves it at zero) and whether the stopping rule was
/// met.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptReport {
    pub normalized_errors: Vec<f64>,
    pub iterations: usize,
    pub distance: f64,
    pub wall_seconds: f64,
    pub converged: bool,
}

impl AttemptReport {
    pub(crate) fn new(iterations: usize, distance: f64, converged: bool) -> Self {
        AttemptReport {
            normalized_errors: Vec::new(),
            iterations,
            distance,
            wall_seconds: 0.0,
            converged,
        }
    }
}
