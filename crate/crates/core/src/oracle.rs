//! Reference solvers used to judge SCA: exhaustive lattice search for a
//! handful of agents, and multi-start projected gradient on the original
//! (nonconvex) objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::Side;
use crate::scenario::{AllocationProblem, ScenarioError};

/// Largest agent count accepted by [`grid_search`].
pub const MAX_GRID_AGENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid search supports at most {MAX_GRID_AGENTS} agents, got {0}")]
    TooManyAgents(usize),
    #[error("invalid oracle config: {0}")]
    Config(&'static str),
    #[error("no lattice point has a finite objective")]
    NoFiniteValue,
    #[error(transparent)]
    Problem(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Lattice points per axis, endpoints included.
    pub grid_points_per_axis: usize,
    pub n_starts: usize,
    pub start_seed: u64,
    /// A start stops early once its step length falls below `local_tol·P_total`.
    pub local_tol: f64,
    /// Projected-gradient iterations per start.
    pub local_iters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { grid_points_per_axis: 401, n_starts: 8, start_seed: 0, local_tol: 1e-12, local_iters: 20_000 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.grid_points_per_axis < 2 {
            return Err(OracleError::Config("grid_points_per_axis must be at least 2"));
        }
        if self.n_starts == 0 || self.local_iters == 0 {
            return Err(OracleError::Config("n_starts and local_iters must be positive"));
        }
        if !(self.local_tol > 0.0 && self.local_tol.is_finite()) {
            return Err(OracleError::Config("local_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub allocation: Vec<f64>,
    pub objective: f64,
}

/// Best point of `{P = h·j : j ∈ ℕ^N, Σ j ≤ G − 1}` with `h = P_total/(G − 1)`.
/// Ties go to the lexicographically smallest `j`.
pub fn grid_search(problem: &AllocationProblem, cfg: &OracleConfig) -> Result<OracleSolution, OracleError> {
    cfg.validate()?;
    problem.validate()?;
    let n = problem.len();
    if n > MAX_GRID_AGENTS {
        return Err(OracleError::TooManyAgents(n));
    }
    let steps = cfg.grid_points_per_axis - 1;
    let h = problem.p_total / steps as f64;
    let weights = problem.weights()?;
    // table[i][j] = −w_i·u_i(SNR at j·h); overflow becomes +∞
    let table: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..=steps)
                .map(|j| {
                    let u = problem.agents[i].params.utility(problem.snr(i, j as f64 * h));
                    u.map_or(f64::INFINITY, |u| -weights[i] * u)
                })
                .collect()
        })
        .collect();

    let per_first: Vec<(f64, Vec<usize>)> = (0..=steps)
        .into_par_iter()
        .map(|j0| {
            let mut idx = vec![0; n];
            idx[0] = j0;
            let mut best = (f64::INFINITY, Vec::new());
            enumerate(&table, 1, steps - j0, table[0][j0], &mut idx, &mut best);
            best
        })
        .collect();
    let (value, idx) = per_first.into_iter().fold((f64::INFINITY, Vec::new()), |acc, cand| if cand.0 < acc.0 { cand } else { acc });
    if !value.is_finite() {
        return Err(OracleError::NoFiniteValue);
    }
    let allocation: Vec<f64> = idx.iter().map(|&j| j as f64 * h).collect();
    let objective = problem.objective(&allocation)?;
    Ok(OracleSolution { allocation, objective })
}

fn enumerate(table: &[Vec<f64>], depth: usize, remaining: usize, partial: f64, idx: &mut [usize], best: &mut (f64, Vec<usize>)) {
    if depth == table.len() {
        if partial < best.0 {
            *best = (partial, idx.to_vec());
        }
        return;
    }
    for j in 0..=remaining {
        idx[depth] = j;
        enumerate(table, depth + 1, remaining - j, partial + table[depth][j], idx, best);
    }
}

/// Euclidean projection onto `{x ≥ 0, Σ x ≤ cap}`.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    project_simplex(v, cap)
}

/// Euclidean projection onto `{x ≥ 0, Σ x = cap}` by Michelot's active-set
/// iteration: shift the active coordinates by a common `τ`, drop those that
/// fall to zero, repeat.
pub fn project_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let mut active: Vec<usize> = (0..v.len()).collect();
    let mut tau;
    loop {
        tau = (active.iter().map(|&i| v[i]).sum::<f64>() - cap) / active.len() as f64;
        let before = active.len();
        active.retain(|&i| v[i] > tau);
        if active.len() == before || active.is_empty() {
            break;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Uniform draw from `{P ≥ 0, Σ P ≤ cap}`.
pub fn uniform_capped_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize, cap: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e[..n].iter().map(|x| cap * x / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartOutcome {
    pub start: Vec<f64>,
    pub allocation: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultistartResult {
    pub allocation: Vec<f64>,
    pub objective: f64,
    pub starts: Vec<StartOutcome>,
}

fn on_kink(c: f64, p: f64, x0: f64) -> bool {
    (c * p - x0).abs() <= 1e-12 * x0.abs().max(1.0)
}

/// Reduced gradient of `f` at `p`: the budget multiplier `μ` is removed on
/// the budget face, a coordinate sitting on its reference point uses the
/// element of `[∂⁻, ∂⁺]` closest to `μ`, and coordinates pinned at zero that
/// would leave the orthant get 0. `None` if a derivative overflows.
fn reduced_gradient(problem: &AllocationProblem, weights: &[f64], p: &[f64]) -> Option<Vec<f64>> {
    let n = p.len();
    let mut g = vec![0.0; n];
    let mut kink_bounds = vec![None; n];
    for i in 0..n {
        let c = problem.snr_per_power(i);
        let params = &problem.agents[i].params;
        let scale = -weights[i] * c;
        if on_kink(c, p[i], params.x0) {
            let left = scale * params.loss_slope_at_reference();
            let right = scale * params.gain_slope_at_reference();
            kink_bounds[i] = Some((left.min(right), left.max(right)));
        } else {
            g[i] = scale * params.derivative(c * p[i], Side::Right).ok().filter(|d| d.is_finite())?;
        }
    }
    let tight = p.iter().sum::<f64>() >= problem.p_total * (1.0 - 1e-12);
    let smooth_free: Vec<usize> = (0..n).filter(|&i| kink_bounds[i].is_none() && p[i] > 0.0).collect();
    let mu = if !tight {
        0.0
    } else if smooth_free.is_empty() {
        let kinks: Vec<f64> = kink_bounds.iter().flatten().map(|b| b.1).collect();
        if kinks.is_empty() {
            0.0
        } else {
            kinks.iter().sum::<f64>() / kinks.len() as f64
        }
    } else {
        smooth_free.iter().map(|&i| g[i]).sum::<f64>() / smooth_free.len() as f64
    }
    .min(0.0);
    for i in 0..n {
        if let Some((lo, hi)) = kink_bounds[i] {
            g[i] = mu.clamp(lo, hi);
        }
        g[i] -= mu;
        if p[i] <= 0.0 && g[i] > 0.0 {
            g[i] = 0.0;
        }
    }
    Some(g)
}

/// Step scales (relative to `P_total`) of the successive phases of one start.
/// Each phase restarts the `1/t` schedule from the best point so far.
const PHASE_SCALES: [f64; 3] = [0.1, 1e-3, 1e-5];

fn local_descent(problem: &AllocationProblem, weights: &[f64], start: &[f64], cfg: &OracleConfig) -> StartOutcome {
    let p_total = problem.p_total;
    let value = |p: &[f64]| problem.objective(p).ok().filter(|v| v.is_finite()).unwrap_or(f64::INFINITY);
    let mut best = (value(start), start.to_vec());
    let per_phase = cfg.local_iters.div_ceil(PHASE_SCALES.len());
    let mut iterations = 0;
    for scale in PHASE_SCALES {
        let s0 = scale * p_total;
        let mut p = best.1.clone();
        for t in 1..=per_phase {
            iterations += 1;
            let Some(grad) = reduced_gradient(problem, weights, &p) else { break };
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm <= f64::MIN_POSITIVE {
                break;
            }
            let step = s0 / t as f64 / norm;
            let trial: Vec<f64> = p.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            // Kink coordinates with zero reduced gradient stay exactly put; a
            // joint projection would nudge them off the kink by rounding.
            let held: Vec<bool> =
                (0..p.len()).map(|i| grad[i] == 0.0 && on_kink(problem.snr_per_power(i), p[i], problem.agents[i].params.x0)).collect();
            let mut next = if held.contains(&true) {
                let was_tight = p.iter().sum::<f64>() >= p_total * (1.0 - 1e-12);
                let cap = p_total - (0..p.len()).filter(|&i| held[i]).map(|i| p[i]).sum::<f64>();
                let rest: Vec<usize> = (0..p.len()).filter(|&i| !held[i]).collect();
                let free: Vec<f64> = rest.iter().map(|&i| trial[i]).collect();
                let moved = if was_tight { project_simplex(&free, cap.max(0.0)) } else { project_capped_simplex(&free, cap.max(0.0)) };
                let mut next = p.clone();
                for (&i, v) in rest.iter().zip(moved) {
                    next[i] = v;
                }
                next
            } else {
                project_capped_simplex(&trial, p_total)
            };
            // Stop at a reference point instead of jumping over it, keeping
            // the budget face if the step ended on it.
            let tight = next.iter().sum::<f64>() >= p_total * (1.0 - 1e-12);
            let mut truncated = vec![false; next.len()];
            for i in 0..next.len() {
                let c = problem.snr_per_power(i);
                let x0 = problem.agents[i].params.x0;
                // A coordinate already on its reference point may leave it;
                // `x0/c` can round to either side of `x0`.
                if !on_kink(c, p[i], x0) && (c * p[i] - x0) * (c * next[i] - x0) < 0.0 {
                    next[i] = x0 / c;
                    truncated[i] = true;
                }
            }
            if truncated.contains(&true) {
                let rest: Vec<usize> = (0..next.len()).filter(|&i| !truncated[i]).collect();
                let fixed: f64 = (0..next.len()).filter(|&i| truncated[i]).map(|i| next[i]).sum();
                let free: Vec<f64> = rest.iter().map(|&i| next[i]).collect();
                let cap = p_total - fixed;
                if cap >= 0.0 && !rest.is_empty() {
                    let moved = if tight { project_simplex(&free, cap) } else { project_capped_simplex(&free, cap) };
                    for (&i, v) in rest.iter().zip(moved) {
                        next[i] = v;
                    }
                } else {
                    next = project_capped_simplex(&next, p_total);
                }
            }
            let moved = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            p = next;
            let v = value(&p);
            if v < best.0 {
                best = (v, p.clone());
            }
            if moved <= cfg.local_tol * p_total {
                break;
            }
        }
    }
    StartOutcome { start: start.to_vec(), allocation: best.1, objective: best.0, iterations }
}

/// Projected gradient from `n_starts` seeded uniform starts; returns the best
/// local solution (ties to the earliest start).
pub fn multistart_local(problem: &AllocationProblem, cfg: &OracleConfig) -> Result<MultistartResult, OracleError> {
    cfg.validate()?;
    problem.validate()?;
    let weights = problem.weights()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.start_seed);
    let starts: Vec<Vec<f64>> = (0..cfg.n_starts).map(|_| uniform_capped_simplex(&mut rng, problem.len(), problem.p_total)).collect();
    let outcomes: Vec<StartOutcome> = starts.par_iter().map(|s| local_descent(problem, &weights, s, cfg)).collect();
    let best = outcomes
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, o)| match acc {
            Some((_, v)) if v <= o.objective => acc,
            _ => Some((i, o.objective)),
        })
        .map(|(i, _)| i)
        .expect("at least one start");
    if !outcomes[best].objective.is_finite() {
        return Err(OracleError::NoFiniteValue);
    }
    Ok(MultistartResult { allocation: outcomes[best].allocation.clone(), objective: outcomes[best].objective, starts: outcomes })
}
