//! Sensor selection for linear measurement models by log-det maximization.
//!
//! A central collector picks `k` of `m` sensor rows to maximize
//! `log det(Σ z_i a_i a_i^T)`. This crate solves the convex relaxation with a
//! log-barrier Newton method, rounds it, and compares the centralized choice
//! with two leader nodes that each hold half of the rows:
//!
//! - naive decentralized selection (no communication),
//! - focused diversity (node 2 augments its information matrix with node 1's
//!   dominant eigen-directions),
//! - linear penalty (node 2 pays a cost for rows aligned with them).
//!
//! Node 1 shares only `N` vectors `λ_j u_j` with node 2. The [`experiments`]
//! module runs seeded Monte-Carlo comparisons of all four strategies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier_solver;
pub mod cli;
pub mod error;
pub mod exchange;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod strategies;

pub use barrier_solver::{solve_relaxed, RelaxedProblem, RelaxedSolution, SolverParams};
pub use error::{Error, Result};
pub use model::{BoundsReport, MeasurementMatrix, Partition, SelectionKind, SelectionVector};
pub use strategies::{SharedVectorSet, Strategy, StrategyOutcome};
