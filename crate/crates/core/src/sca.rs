//! Successive convex approximation.
//!
//! Each outer iteration replaces every agent's utility by a concave minorant
//! that touches it at the current SNR, solves the resulting convex problem,
//! and moves part of the way towards its solution:
//! `P^{l+1} = P^l + θ^l·(P̂ − P^l)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{dual_ascent, DualConfig, DualError, DualSolution, SurrogateObjective, WarmStart};
use crate::scenario::{AllocationProblem, ScenarioError};
use crate::surrogate::{build_surrogate, SurrogateConfig, SurrogateError, SurrogateUtility};

/// Slack allowed on `P ≥ 0` and `Σ P ≤ P_total` for a starting point.
const FEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaError {
    #[error("starting point is infeasible: {0}")]
    InfeasibleStart(String),
    #[error("inner solver failed at outer iteration {iteration}: {source}")]
    InnerSolverFailure { iteration: usize, source: DualError },
    #[error("surrogate for agent {agent} at outer iteration {iteration}: {source}")]
    Surrogate { iteration: usize, agent: usize, source: SurrogateError },
    #[error(transparent)]
    Problem(#[from] ScenarioError),
    #[error("invalid SCA config: {0}")]
    Config(&'static str),
}

/// Convex-combination weights `θ^l`, indexed from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThetaSchedule {
    /// `θ0 / (1 + c·l)`.
    Harmonic {
        theta0: f64,
        c: f64,
    },
    /// `θ0 / (1 + l)^exponent`.
    Power {
        theta0: f64,
        exponent: f64,
    },
    Constant1,
}

impl Default for ThetaSchedule {
    fn default() -> Self {
        ThetaSchedule::Harmonic { theta0: 1.0, c: 0.1 }
    }
}

impl ThetaSchedule {
    pub fn value(&self, l: usize) -> f64 {
        let l = l as f64;
        match *self {
            ThetaSchedule::Harmonic { theta0, c } => theta0 / (1.0 + c * l),
            ThetaSchedule::Power { theta0, exponent } => theta0 / (1.0 + l).powf(exponent),
            ThetaSchedule::Constant1 => 1.0,
        }
    }

    /// Values in `(0, 1]`, vanishing, not summable.
    pub fn validate(&self) -> Result<(), ScaError> {
        match *self {
            ThetaSchedule::Harmonic { theta0, c } => {
                if !(theta0 > 0.0 && theta0 <= 1.0) {
                    return Err(ScaError::Config("theta0 must lie in (0, 1]"));
                }
                if !(c > 0.0 && c.is_finite()) {
                    return Err(ScaError::Config("harmonic rate c must be positive"));
                }
            }
            ThetaSchedule::Power { theta0, exponent } => {
                if !(theta0 > 0.0 && theta0 <= 1.0) {
                    return Err(ScaError::Config("theta0 must lie in (0, 1]"));
                }
                if !(exponent > 0.0 && exponent <= 1.0) {
                    return Err(ScaError::Config("power exponent must lie in (0, 1]"));
                }
            }
            ThetaSchedule::Constant1 => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaConfig {
    pub theta: ThetaSchedule,
    pub max_outer_iters: usize,
    /// Stop when `‖P̂ − P‖∞ ≤ x_tol·P_total`.
    pub x_tol: f64,
    /// Stop when `|Δf| ≤ f_tol·(1 + |f|)`.
    pub f_tol: f64,
    /// Take full steps (`θ = 1`).
    pub monotone_mode: bool,
    pub surrogate: SurrogateConfig,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            theta: ThetaSchedule::default(),
            max_outer_iters: 500,
            x_tol: 1e-6,
            f_tol: 1e-9,
            monotone_mode: false,
            surrogate: SurrogateConfig::default(),
        }
    }
}

impl ScaConfig {
    pub fn validate(&self) -> Result<(), ScaError> {
        self.theta.validate()?;
        self.surrogate.validate().map_err(|_| ScaError::Config("invalid surrogate settings"))?;
        if self.max_outer_iters == 0 {
            return Err(ScaError::Config("max_outer_iters must be positive"));
        }
        if !(self.x_tol > 0.0 && self.f_tol > 0.0) {
            return Err(ScaError::Config("tolerances must be positive"));
        }
        Ok(())
    }

    pub fn theta(&self, l: usize) -> f64 {
        if self.monotone_mode {
            1.0
        } else {
            self.theta.value(l)
        }
    }
}

/// `θ^l` under `cfg`.
pub fn theta(cfg: &ScaConfig, l: usize) -> f64 {
    cfg.theta(l)
}

/// Solves the convex surrogate problem of one outer iteration.
pub trait InnerSolver: Sync {
    fn solve(&self, problem: &AllocationProblem, surrogates: &[SurrogateUtility], warm: &WarmStart) -> Result<DualSolution, DualError>;
}

/// Lagrangian relaxation with projected subgradient loops.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualSubgradient {
    pub cfg: DualConfig,
}

impl DualSubgradient {
    pub fn new(cfg: DualConfig) -> Self {
        Self { cfg }
    }
}

impl InnerSolver for DualSubgradient {
    fn solve(&self, problem: &AllocationProblem, surrogates: &[SurrogateUtility], warm: &WarmStart) -> Result<DualSolution, DualError> {
        let objective = SurrogateObjective::new(surrogates, problem)?;
        dual_ascent(&objective, &self.cfg, warm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStatus {
    Converged,
    /// Iteration budget ran out; the best feasible iterate was used.
    BudgetExhausted,
}

impl InnerStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            InnerStatus::Converged => "converged",
            InnerStatus::BudgetExhausted => "budget-exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    XTol,
    FTol,
    MaxIters,
}

impl Termination {
    pub fn converged(self) -> bool {
        self != Termination::MaxIters
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::XTol => "x-tol",
            Termination::FTol => "f-tol",
            Termination::MaxIters => "max-iters",
        }
    }
}

/// What happened while leaving an iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// `f̃(P̂ | P^l)`.
    pub surrogate_optimum: f64,
    pub theta: f64,
    pub inner_status: InnerStatus,
    pub k: f64,
    /// Complementary slackness `k·g` of the inner solve.
    pub gap: f64,
    /// `f̃(P̂) − max h`.
    pub duality_gap: f64,
    pub weak_duality_violation: f64,
    /// `|f̃(P^l | P^l) − f(P^l)|`.
    pub touch_error: f64,
    /// `‖P̂ − P^l‖∞`.
    pub step_norm: f64,
    pub dual_iterations: usize,
    pub primal_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub allocation: Vec<f64>,
    pub objective: f64,
    /// `None` for the final iterate.
    pub step: Option<StepRecord>,
}

/// Iterates in order; the first is the starting point.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScaTrace {
    pub records: Vec<TraceRecord>,
}

impl ScaTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| r.step.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub allocation: Vec<f64>,
    pub objective: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    pub termination: Termination,
    pub trace: ScaTrace,
}

impl SolveResult {
    pub fn inner_budget_exhaustions(&self) -> usize {
        self.trace.steps().filter(|s| s.inner_status == InnerStatus::BudgetExhausted).count()
    }
}

/// Per-agent surrogates around the SNRs induced by `allocation`.
pub fn build_surrogates(
    problem: &AllocationProblem,
    allocation: &[f64],
    cfg: &SurrogateConfig,
) -> Result<Vec<SurrogateUtility>, (usize, SurrogateError)> {
    problem
        .agents
        .iter()
        .zip(allocation)
        .enumerate()
        .map(|(i, (a, &p))| build_surrogate(&a.params, problem.snr(i, p), cfg).map_err(|e| (i, e)))
        .collect()
}

fn check_start(problem: &AllocationProblem, x: &[f64]) -> Result<(), ScaError> {
    problem.check_dimension(x)?;
    if let Some((i, p)) = x.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= -FEASIBILITY_SLACK)) {
        return Err(ScaError::InfeasibleStart(format!("P({i}) = {p}")));
    }
    let sum: f64 = x.iter().sum();
    if sum > problem.p_total * (1.0 + FEASIBILITY_SLACK) {
        return Err(ScaError::InfeasibleStart(format!("Σ P = {sum} exceeds P_total = {}", problem.p_total)));
    }
    Ok(())
}

/// Runs SCA from `x_init`.
pub fn sca_solve(problem: &AllocationProblem, x_init: &[f64], cfg: &ScaConfig, inner: &dyn InnerSolver) -> Result<SolveResult, ScaError> {
    problem.validate()?;
    cfg.validate()?;
    check_start(problem, x_init)?;

    let p_total = problem.p_total;
    let mut current: Vec<f64> = x_init.iter().map(|&p| p.max(0.0)).collect();
    let mut f = problem.objective(&current)?;
    let mut records = Vec::new();
    let mut warm = WarmStart { allocation: current.clone(), k: None };
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    for l in 0..cfg.max_outer_iters {
        iterations = l + 1;
        let surrogates = build_surrogates(problem, &current, &cfg.surrogate).map_err(|(agent, source)| ScaError::Surrogate {
            iteration: l,
            agent,
            source,
        })?;
        let objective =
            SurrogateObjective::new(&surrogates, problem).map_err(|source| ScaError::InnerSolverFailure { iteration: l, source })?;
        let touch_error = (objective.value(&current) - f).abs();

        let (solution, inner_status) = match inner.solve(problem, &surrogates, &warm) {
            Ok(s) => (s, InnerStatus::Converged),
            Err(DualError::BudgetExhausted { best }) => (*best, InnerStatus::BudgetExhausted),
            Err(source) => return Err(ScaError::InnerSolverFailure { iteration: l, source }),
        };
        let target = &solution.allocation;
        let theta = cfg.theta(l);
        let step_norm = target.iter().zip(&current).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

        let mut next: Vec<f64> = current.iter().zip(target).map(|(&p, &q)| (p + theta * (q - p)).max(0.0)).collect();
        let sum: f64 = next.iter().sum();
        if sum > p_total {
            next.iter_mut().for_each(|p| *p *= p_total / sum);
        }
        let f_next = problem.objective(&next)?;

        records.push(TraceRecord {
            iteration: l,
            allocation: std::mem::replace(&mut current, next),
            objective: f,
            step: Some(StepRecord {
                surrogate_optimum: solution.primal_value,
                theta,
                inner_status,
                k: solution.k,
                gap: solution.gap,
                duality_gap: solution.duality_gap(),
                weak_duality_violation: solution.weak_duality_violation,
                touch_error,
                step_norm,
                dual_iterations: solution.dual_iterations,
                primal_iterations: solution.primal_iterations,
            }),
        });
        let f_prev = std::mem::replace(&mut f, f_next);
        warm = WarmStart { allocation: solution.allocation, k: Some(solution.k) };

        if step_norm <= cfg.x_tol * p_total {
            termination = Termination::XTol;
            break;
        }
        if (f - f_prev).abs() <= cfg.f_tol * (1.0 + f_prev.abs()) {
            termination = Termination::FTol;
            break;
        }
    }
    records.push(TraceRecord { iteration: iterations, allocation: current.clone(), objective: f, step: None });
    Ok(SolveResult { allocation: current, objective: f, iterations, termination, trace: ScaTrace { records } })
}
