//! Per-iteration solver telemetry.

use std::time::Instant;

/// One row of solver history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖D − L − S‖_F / ‖D‖_F` (restricted to observed entries for CPCP).
    pub feasibility_gap: f64,
    pub objective: f64,
    pub rank_l: usize,
    /// Fraction of nonzero entries of `S`.
    pub sparsity_s: f64,
    /// Seconds since the solve started.
    pub wall_seconds: f64,
}

/// How a solve ended. Non-convergence is reported, not raised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    TimeBudget,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        self == SolveStatus::Converged
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::TimeBudget => "time-budget",
        }
    }
}

pub(crate) struct Stopwatch(Instant);

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Stopwatch(Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub(crate) fn sparsity(nonzero: usize, total: usize) -> f64 {
    nonzero as f64 / total as f64
}
