//! Command implementations behind the `cptsca` binary.
//!
//! Each command reads a [`config::Config`], writes CSV files plus a
//! `meta.json` sidecar into an output directory, and reports an
//! [`Outcome`]. Errors map to exit codes through [`exit_code`].

pub mod batch;
pub mod config;
pub mod output;
pub mod solve;
pub mod trace;
pub mod verify;

use cpt_sca::ScaError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const BUDGET_EXHAUSTED: u8 = 2;
    pub const INVARIANT: u8 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("trace-contour needs exactly 3 agents, got {0}")]
    WrongDimension(usize),
}

/// How a command that ran to completion ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The outer iteration budget ran out before a stopping test held.
    BudgetExhausted,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => exit::SUCCESS,
            Outcome::BudgetExhausted => exit::BUDGET_EXHAUSTED,
        }
    }
}

/// Numerical failures inside the solver count as invariant violations;
/// everything else is a usage or configuration problem.
pub fn exit_code(result: &anyhow::Result<Outcome>) -> u8 {
    match result {
        Ok(outcome) => outcome.code(),
        Err(e) => {
            if matches!(e.downcast_ref::<CliError>(), Some(CliError::Invariant(_))) {
                return exit::INVARIANT;
            }
            match e.downcast_ref::<ScaError>() {
                Some(ScaError::InnerSolverFailure { .. } | ScaError::Surrogate { .. }) => exit::INVARIANT,
                _ => exit::USAGE,
            }
        }
    }
}

/// Slack on `P ≥ 0` and `Σ P ≤ P_total` when auditing solver output.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Fails with [`CliError::Invariant`] unless `allocation` is feasible.
pub fn check_feasible(allocation: &[f64], p_total: f64) -> Result<(), CliError> {
    let sum: f64 = allocation.iter().sum();
    if allocation.iter().any(|&p| p.is_nan() || p < -FEASIBILITY_SLACK) || sum.is_nan() || sum > p_total * (1.0 + FEASIBILITY_SLACK) {
        return Err(CliError::Invariant(format!("infeasible allocation {allocation:?} (sum {sum}, budget {p_total})")));
    }
    Ok(())
}
