//! Parallel optimized sampling (POS) for stochastic differential equations.
//!
//! An ensemble of `N_S` trajectories is treated as one extended vector and
//! adjusted jointly — by least-norm Newton steps — so that a finite set of
//! sampled observables (typically moments) matches known target values.
//! The crate provides:
//!
//! - [`ensemble`] / [`stats`]: the flat ensemble representation, pairwise-sum
//!   moment and cumulant computation, and the error normalizations used by
//!   every benchmark.
//! - [`linsolve`]: the small dense `M×M` normal-equation solve behind the
//!   least-norm update `δX = J†(JJ†)⁻¹ r`, plus an SVD pseudo-inverse fallback.
//! - [`observables`]: monomial observable sets in one and two dimensions with
//!   value/gradient/Hessian evaluators and moment-based Gram assembly.
//! - [`static_pos`]: optimization of an initial random ensemble against
//!   analytic targets.
//! - [`dynamic`]: Euler–Maruyama stepping plus the combined and individual
//!   per-step optimizers and a multi-step integrator.
//! - [`models`]: the benchmark SDEs (Ornstein–Uhlenbeck, cubic drift,
//!   irregular drift, laser equation) with exact-moment and steady-state
//!   quadrature oracles.
//! - [`planner`]: the optimal sample/step split for a fixed computational
//!   budget.
//! - [`noise`]: a jump-ahead-capable Gaussian stream so every
//!   (run, step, sample) tuple maps to one reproducible draw.
//!
//! All operations are pure functions of their inputs; ensembles are immutable
//! values from the caller's view. Reductions run in a fixed deterministic
//! order regardless of thread count, so results are reproducible bit-for-bit
//! for a fixed seed. The crate is `no_std`-compatible (with `alloc`); disable
//! the default `std` feature for embedded or kernel use.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dynamic;
pub mod ensemble;
pub mod error;
mod fm;
pub mod linsolve;
pub mod models;
pub mod noise;
pub mod observables;
pub mod planner;
pub mod quad;
pub mod report;
pub mod static_pos;
pub mod stats;

pub use dynamic::{euler_step, ideal_moment_changes, integrate, StepProposal};
pub use ensemble::Ensemble;
pub use error::PosError;
pub use linsolve::{DenseMatrix, GramMatrix};
pub use observables::ObservableSet;
pub use report::AttemptReport;
pub use static_pos::OptimizerConfig;
pub use stats::MomentVector;
