//! Power allocation for agents with prospect-theoretic utilities.
//!
//! The objective `−Σ w(p_i)·u_i(SNR_i)` is nonconvex when utilities are
//! S-shaped. [`sca::sca_solve`] handles it by successive convex
//! approximation: per-agent concave minorants ([`surrogate`]) whose convex
//! subproblems are solved by Lagrangian relaxation ([`dual`]).
//! [`oracle`] provides independent reference solvers.

pub mod cpt;
pub mod dual;
pub mod oracle;
pub mod report;
pub mod sca;
pub mod scenario;
pub mod surrogate;

pub use cpt::{CptError, CptParams, Pwf, Shape, ShapeClass, Side};
pub use dual::{DualConfig, DualError, DualSolution, KinkRule, StepScaling, StepSchedule, WarmStart};
pub use oracle::{grid_search, multistart_local, OracleConfig, OracleError};
pub use report::{RunReport, RunRow};
pub use sca::{sca_solve, DualSubgradient, InnerSolver, ScaConfig, ScaError, ScaTrace, SolveResult, ThetaSchedule};
pub use scenario::{generate_scenario, Agent, AllocationProblem, ParamSampler, ScenarioError, ScenarioSpec};
pub use surrogate::{build_surrogate, SurrogateCase, SurrogateConfig, SurrogateError, SurrogateUtility};
