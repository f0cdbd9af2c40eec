//! Solver status and per-iteration trace records.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    LineSearchFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::LineSearchFailure => "line_search_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One accepted inner step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub outer_iter: usize,
    pub inner_iter: usize,
    pub merit: f64,
    pub primal_inf: f64,
    pub dual_inf: f64,
    pub mu_e: f64,
    pub mu_i: f64,
    pub rho: f64,
    pub alpha: f64,
    pub active_set_size: usize,
    pub regularization: f64,
}

impl TraceRecord {
    /// Column names, in the order [`TraceRecord::csv_row`] writes them.
    pub const COLUMNS: [&'static str; 11] = [
        "outer_iter",
        "inner_iter",
        "merit",
        "primal_inf",
        "dual_inf",
        "mu_e",
        "mu_i",
        "rho",
        "alpha",
        "active_set_size",
        "regularization",
    ];

    pub fn csv_header() -> String {
        Self::COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e}",
            self.outer_iter,
            self.inner_iter,
            self.merit,
            self.primal_inf,
            self.dual_inf,
            self.mu_e,
            self.mu_i,
            self.rho,
            self.alpha,
            self.active_set_size,
            self.regularization
        )
    }
}
