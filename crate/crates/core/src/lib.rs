//! Primal-dual augmented Lagrangian solvers for constrained optimization.
//!
//! Two solvers share the same merit function and bound-constrained Lagrangian
//! (BCL) outer loop:
//!
//! * [`nlp`] solves a generic NLP `min f(x) s.t. c(x) = 0, h(x) <= 0` with
//!   semi-smooth primal-dual Newton steps on a proximal augmented Lagrangian.
//! * [`trajopt`] applies the same method to discrete optimal control
//!   problems, solving the Newton system with a DDP-style backward recursion
//!   over regularized stage KKT systems.
//!
//! [`problems`] holds the benchmark models (bound-constrained LQR, obstacle
//! LQR, car parking) and [`cli`] the benchmark runner.

// Parameter checks are written `!(v > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod kkt;
pub mod linalg;
pub mod nlp;
pub mod problems;
pub mod report;
pub mod trajopt;

pub use error::{Error, Result};
pub use report::{SolveStatus, TraceRecord};
