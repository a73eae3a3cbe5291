//! Sparse signal recovery by a limited-memory BFGS trust-region method.
//!
//! The l2-l1 problem `min 1/2 ||A f - y||^2 + tau ||f||_1` is rewritten as a
//! smooth unconstrained problem through the split `f = u - v` and the
//! softplus reparameterization of `u, v >= 0` ([`objective`]). That problem
//! is minimized with a trust-region method ([`driver`]) whose quadratic
//! models use the compact L-BFGS matrix ([`lbfgs_compact`]) and whose
//! subproblems are solved to global optimality from a small
//! eigendecomposition ([`trs`]).
//!
//! A gradient-projection baseline with Barzilai-Borwein steps ([`gpsr`]) and
//! a seeded benchmark harness ([`experiment`]) are included for comparison.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driver;
pub mod error;
pub mod experiment;
pub mod gpsr;
pub mod lbfgs_compact;
pub mod linalg;
pub mod objective;
pub mod trs;

pub use driver::{solve, IterateRecord, SolveOutput, SolveStatus, SolverConfig};
pub use error::{Error, Result};
pub use gpsr::{gpsr_bb_solve, GpsrConfig, GpsrOutput};
pub use lbfgs_compact::{CompactFactors, PairBuffer};
pub use objective::{sigmoid, softplus, to_signal, LinearOperator, SparseProblem, TransformedPoint};
pub use trs::{solve_subproblem, SpectralFactors, TrSolution};
