//! Lagrangian relaxation of the surrogate problem.
//!
//! For a fixed set of per-agent surrogates the inner problem is
//!
//! ```text
//! min  f̃(P) = −Σ w_i · ũ_i(c_i · P_i)     s.t.  P ≥ 0,  Σ P ≤ P_total
//! ```
//!
//! with `c_i = |h_i|²/σ²`. The budget is priced by `k ≥ 0`:
//! `L(P, k) = f̃(P) + k·(Σ P − P_total)`. The dual `h(k) = min_{P ≥ 0} L(P, k)`
//! is maximized by projected (sub)gradient ascent on `k`, and each `h(k)`
//! evaluation is itself a projected subgradient descent on `P` over the
//! nonnegative orthant. Both loops use square-summable, non-summable steps.
//!
//! Steps can be taken as written (`StepScaling::Plain`) or rescaled by the
//! local curvature of each separable term (`StepScaling::Curvature`), which
//! makes the unit step a Newton step and lets the diminishing factor do the
//! damping. The projection onto the orthant is componentwise either way.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::Side;
use crate::scenario::{AllocationProblem, ScenarioError};
use crate::surrogate::SurrogateUtility;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DualError {
    #[error("primal iterate norm {norm} exceeded the divergence cap; surrogate is probably not concave")]
    Diverged { norm: f64 },
    #[error("dual iteration budget exhausted (k = {}, g = {})", .best.k, .best.feasibility)]
    BudgetExhausted { best: Box<DualSolution> },
    #[error("invalid dual config: {0}")]
    Config(&'static str),
    #[error("{0} surrogates for {1} agents")]
    SurrogateCount(usize, usize),
    #[error(transparent)]
    Problem(#[from] ScenarioError),
}

/// Step sequence indexed from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `base / i`.
    Harmonic { base: f64 },
    /// `base / i^exponent`, `exponent ∈ (1/2, 1]`.
    Power { base: f64, exponent: f64 },
}

impl StepSchedule {
    pub fn step(&self, i: usize) -> f64 {
        let i = i.max(1) as f64;
        match *self {
            StepSchedule::Harmonic { base } => base / i,
            StepSchedule::Power { base, exponent } => base / i.powf(exponent),
        }
    }

    /// Square summable but not summable.
    pub fn validate(&self) -> Result<(), DualError> {
        let (base, exponent) = match *self {
            StepSchedule::Harmonic { base } => (base, 1.0),
            StepSchedule::Power { base, exponent } => (base, exponent),
        };
        if !(base > 0.0 && base.is_finite()) {
            return Err(DualError::Config("step base must be positive"));
        }
        if !(exponent > 0.5 && exponent <= 1.0) {
            return Err(DualError::Config("step exponent must lie in (0.5, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepScaling {
    /// `P ← Π(P − η_j·w)` with `η_j` scaled by `0.1·P_total/N`; `k ← (k + ζ_i·g)₊`.
    Plain,
    /// Steps are fractions `min(1, η_j)` of the per-coordinate Newton step,
    /// clamped to one e-fold of the active exponential piece; the price step
    /// is the fraction `min(1, ζ_i)` of a Newton step on `g(k)`.
    #[default]
    Curvature,
}

/// Subgradient picked at a surrogate kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KinkRule {
    /// Gain-side slope.
    Right,
    /// Element of the subdifferential closest to zero.
    #[default]
    MinNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualConfig {
    pub zeta: StepSchedule,
    pub eta: StepSchedule,
    pub scaling: StepScaling,
    pub kink_rule: KinkRule,
    /// Initial price; `None` estimates it from marginal utilities at equal split.
    pub k_init: Option<f64>,
    pub max_dual_iters: usize,
    pub max_primal_iters: usize,
    /// Complementary slackness target, relative to `1 + |f̃|`.
    pub gap_tol: f64,
    /// Budget violation target, relative to `P_total`.
    pub feas_tol: f64,
    /// Primal loop stops when no coordinate moves more than this (relative to `P_total`).
    pub primal_tol: f64,
    /// Iterates beyond `divergence_cap · P_total` abort the solve.
    pub divergence_cap: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            zeta: StepSchedule::Power { base: 4.0, exponent: 0.6 },
            eta: StepSchedule::Power { base: 4.0, exponent: 0.6 },
            scaling: StepScaling::Curvature,
            kink_rule: KinkRule::MinNorm,
            k_init: None,
            max_dual_iters: 200,
            max_primal_iters: 2000,
            gap_tol: 1e-7,
            feas_tol: 1e-9,
            primal_tol: 1e-13,
            divergence_cap: 1e6,
        }
    }
}

impl DualConfig {
    /// The schedules exactly as first written down: `ζ_i = 1/i`,
    /// `η_j = 0.1·(P_total/N)/j`, unscaled steps, right-slope kink rule.
    pub fn plain() -> Self {
        Self {
            zeta: StepSchedule::Harmonic { base: 1.0 },
            eta: StepSchedule::Harmonic { base: 1.0 },
            scaling: StepScaling::Plain,
            kink_rule: KinkRule::Right,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DualError> {
        self.zeta.validate()?;
        self.eta.validate()?;
        if self.max_dual_iters == 0 || self.max_primal_iters == 0 {
            return Err(DualError::Config("iteration budgets must be positive"));
        }
        for v in [self.gap_tol, self.feas_tol, self.primal_tol, self.divergence_cap] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DualError::Config("tolerances must be positive"));
            }
        }
        if let Some(k) = self.k_init {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(DualError::Config("k_init must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// The separable surrogate objective of one inner problem.
#[derive(Debug, Clone)]
pub struct SurrogateObjective<'a> {
    surrogates: &'a [SurrogateUtility],
    /// SNR per unit power.
    snr_per_power: Vec<f64>,
    weights: Vec<f64>,
    p_total: f64,
}

/// First- and second-order information of one term `L_i` at a point.
#[derive(Debug, Clone, Copy)]
struct Local {
    grad: f64,
    curv: f64,
    /// Length (in power) over which the active piece changes slope by `e`.
    efold: f64,
    on_kink: bool,
}

impl<'a> SurrogateObjective<'a> {
    pub fn new(surrogates: &'a [SurrogateUtility], problem: &AllocationProblem) -> Result<Self, DualError> {
        if surrogates.len() != problem.len() {
            return Err(DualError::SurrogateCount(surrogates.len(), problem.len()));
        }
        Ok(Self {
            surrogates,
            snr_per_power: (0..problem.len()).map(|i| problem.snr_per_power(i)).collect(),
            weights: problem.weights()?,
            p_total: problem.p_total,
        })
    }

    pub fn len(&self) -> usize {
        self.surrogates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surrogates.is_empty()
    }

    pub fn p_total(&self) -> f64 {
        self.p_total
    }

    /// `−w_i · ũ_i(c_i·p)`.
    pub fn term(&self, i: usize, p: f64) -> f64 {
        -self.weights[i] * self.surrogates[i].value(self.snr_per_power[i] * p)
    }

    /// `f̃(P)`.
    pub fn value(&self, allocation: &[f64]) -> f64 {
        -allocation.iter().enumerate().map(|(i, &p)| self.weights[i] * self.surrogates[i].value(self.snr_per_power[i] * p)).sum::<f64>()
    }

    /// `L(P, k) = f̃(P) + k·g(P)`.
    pub fn lagrangian(&self, allocation: &[f64], k: f64) -> f64 {
        self.value(allocation) + k * (allocation.iter().sum::<f64>() - self.p_total)
    }

    /// Power at which agent `i` sits on its surrogate kink.
    pub fn kink_power(&self, i: usize) -> f64 {
        self.surrogates[i].breakpoint / self.snr_per_power[i]
    }

    fn on_kink(&self, i: usize, p: f64) -> bool {
        let bp = self.surrogates[i].breakpoint;
        (self.snr_per_power[i] * p - bp).abs() <= 1e-12 * bp.abs().max(1.0)
    }

    /// Marginal value `w_i·c_i·ũ_i'` at `p` (right slope at the kink).
    pub fn marginal(&self, i: usize, p: f64) -> f64 {
        let c = self.snr_per_power[i];
        self.weights[i] * c * self.surrogates[i].subgradient(c * p)
    }

    /// Nearest price beyond `k` (above if `raise`, else below) at which some
    /// agent pinned at its kink or at zero starts to move.
    fn unlock_price(&self, allocation: &[f64], k: f64, raise: bool) -> Option<f64> {
        let mut candidates = Vec::new();
        for (i, &p) in allocation.iter().enumerate() {
            let s = &self.surrogates[i];
            let scale = self.weights[i] * self.snr_per_power[i];
            if self.on_kink(i, p) {
                let bp = s.breakpoint;
                let left = scale * s.slope(bp, Side::Left).unwrap_or(f64::NAN);
                let right = scale * s.slope(bp, Side::Right).unwrap_or(f64::NAN);
                candidates.push(if raise { left } else { right });
            } else if p == 0.0 && !raise {
                candidates.push(self.marginal(i, 0.0));
            }
        }
        let beyond = candidates.into_iter().filter(|t| t.is_finite() && if raise { *t > k } else { *t < k });
        if raise {
            beyond.reduce(f64::min)
        } else {
            beyond.reduce(f64::max)
        }
    }

    fn local(&self, i: usize, p: f64, k: f64, rule: KinkRule) -> Local {
        let s = &self.surrogates[i];
        let c = self.snr_per_power[i];
        let w = self.weights[i];
        let piece_efold = |right: bool| {
            let piece = if right { &s.gain } else { &s.loss };
            if piece.rate == 0.0 {
                f64::INFINITY
            } else {
                piece.scale / piece.rate.abs() / c
            }
        };
        if self.on_kink(i, p) {
            let bp = s.breakpoint;
            let left = -w * c * s.slope(bp, Side::Left).unwrap_or(0.0) + k;
            let right = -w * c * s.slope(bp, Side::Right).unwrap_or(0.0) + k;
            let use_right = match rule {
                KinkRule::Right => Some(true),
                KinkRule::MinNorm if left <= 0.0 && right >= 0.0 => None,
                KinkRule::MinNorm => Some(right < 0.0),
            };
            return match use_right {
                None => Local { grad: 0.0, curv: f64::INFINITY, efold: 0.0, on_kink: true },
                Some(r) => {
                    Local { grad: if r { right } else { left }, curv: -w * c * c * s.second(bp, r), efold: piece_efold(r), on_kink: true }
                }
            };
        }
        let x = c * p;
        let right = x >= s.breakpoint;
        Local { grad: -w * c * s.subgradient(x) + k, curv: -w * c * c * s.second(x, right), efold: piece_efold(right), on_kink: false }
    }
}

/// Result of minimizing `L(·, k)` over the orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerMinimum {
    pub allocation: Vec<f64>,
    /// `L(P*, k)`, the estimate of `h(k)`.
    pub lagrangian: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `−dg/dk` at the minimizer: `Σ 1/L_i''` over agents strictly inside
    /// a smooth piece.
    pub sensitivity: f64,
}

/// Projection onto the nonnegative orthant.
pub fn project_nonneg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Projected subgradient descent of `L(·, k)` from `start`.
pub fn inner_minimize(objective: &SurrogateObjective<'_>, k: f64, cfg: &DualConfig, start: &[f64]) -> Result<InnerMinimum, DualError> {
    let n = objective.len();
    let p_total = objective.p_total;
    let plain_scale = 0.1 * p_total / n as f64;
    let cap = cfg.divergence_cap * p_total;
    let mut current = project_nonneg(start);
    let mut best = current.clone();
    let mut best_terms: Vec<f64> = (0..n).map(|i| objective.term(i, current[i]) + k * current[i]).collect();
    let mut iterations = 0;
    let mut converged = false;

    for j in 1..=cfg.max_primal_iters {
        iterations = j;
        let eta = match cfg.scaling {
            StepScaling::Plain => cfg.eta.step(j),
            StepScaling::Curvature => cfg.eta.step(j).min(1.0),
        };
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let p = current[i];
            let local = objective.local(i, p, k, cfg.kink_rule);
            let delta = match cfg.scaling {
                StepScaling::Plain => -eta * plain_scale * local.grad,
                StepScaling::Curvature => {
                    if local.grad == 0.0 {
                        0.0
                    } else {
                        let limit = local.efold.min(p_total);
                        let newton = if local.curv > 0.0 { -local.grad / local.curv } else { f64::INFINITY };
                        let newton = newton.abs().min(limit).copysign(-local.grad);
                        eta * newton
                    }
                }
            };
            let mut next = p + delta;
            // Never step across the kink in one move.
            if !local.on_kink {
                let kink = objective.kink_power(i);
                if (p - kink) * (next - kink) < 0.0 {
                    next = kink;
                }
            }
            let next = next.max(0.0);
            if !next.is_finite() || next > cap {
                return Err(DualError::Diverged { norm: next });
            }
            moved = moved.max((next - p).abs());
            current[i] = next;
            let term = objective.term(i, next) + k * next;
            // Later iterates win ties: near the minimum L is flat to rounding.
            if term <= best_terms[i] {
                best_terms[i] = term;
                best[i] = next;
            }
        }
        if moved <= cfg.primal_tol * p_total {
            converged = true;
            break;
        }
    }

    let sensitivity = best
        .iter()
        .enumerate()
        .filter(|&(i, &p)| p > 0.0 && !objective.on_kink(i, p))
        .map(|(i, &p)| {
            let l = objective.local(i, p, k, cfg.kink_rule);
            if l.curv > 0.0 {
                1.0 / l.curv
            } else {
                0.0
            }
        })
        .sum();
    let lagrangian = best_terms.iter().sum::<f64>() - k * p_total;
    Ok(InnerMinimum { allocation: best, lagrangian, iterations, converged, sensitivity })
}

/// Primal-dual pair returned by [`dual_ascent`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// Feasible allocation (`P ≥ 0`, `Σ P ≤ P_total`).
    pub allocation: Vec<f64>,
    pub k: f64,
    /// `f̃` at `allocation`.
    pub primal_value: f64,
    /// Largest dual value `h(k)` seen.
    pub dual_value: f64,
    /// Complementary slackness `k·g(P)` at the last inner minimizer.
    pub gap: f64,
    /// `g(P)` at the last inner minimizer, before feasibility recovery.
    pub feasibility: f64,
    /// `max(0, max h − min f̃(feasible))` over everything encountered.
    pub weak_duality_violation: f64,
    pub dual_iterations: usize,
    pub primal_iterations: usize,
    pub converged: bool,
}

impl DualSolution {
    pub fn duality_gap(&self) -> f64 {
        self.primal_value - self.dual_value
    }
}

/// Scales an allocation down onto the budget if it overspends.
fn recover_feasible(allocation: &[f64], p_total: f64) -> Vec<f64> {
    let sum: f64 = allocation.iter().sum();
    if sum <= p_total {
        allocation.to_vec()
    } else {
        let scale = p_total / sum;
        allocation.iter().map(|&p| p * scale).collect()
    }
}

/// Price estimate: mean marginal value at equal split.
pub fn reference_price(objective: &SurrogateObjective<'_>) -> f64 {
    let share = objective.p_total / objective.len() as f64;
    let k = (0..objective.len()).map(|i| objective.marginal(i, share)).sum::<f64>() / objective.len() as f64;
    if k > 0.0 && k.is_finite() {
        k
    } else {
        1.0
    }
}

/// `k ← (k + ζ_i·g)₊`.
pub fn dual_step(k: f64, zeta: f64, g: f64) -> f64 {
    (k + zeta * g).max(0.0)
}

/// Warm-start information carried between solves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub allocation: Vec<f64>,
    pub k: Option<f64>,
}

/// Projected subgradient ascent on the dual price.
pub fn dual_ascent(objective: &SurrogateObjective<'_>, cfg: &DualConfig, warm: &WarmStart) -> Result<DualSolution, DualError> {
    cfg.validate()?;
    let n = objective.len();
    let p_total = objective.p_total;
    let k_ref = reference_price(objective);
    let mut k = warm.k.or(cfg.k_init).unwrap_or(k_ref);
    let mut point = if warm.allocation.len() == n { warm.allocation.clone() } else { vec![p_total / n as f64; n] };

    let mut best_dual = f64::NEG_INFINITY;
    let mut best_feasible: Option<(Vec<f64>, f64)> = None;
    let mut primal_iterations = 0;
    let mut last = None;

    for i in 1..=cfg.max_dual_iters {
        let inner = inner_minimize(objective, k, cfg, &point)?;
        primal_iterations += inner.iterations;
        best_dual = best_dual.max(inner.lagrangian);
        let g = inner.allocation.iter().sum::<f64>() - p_total;
        let recovered = recover_feasible(&inner.allocation, p_total);
        let value = objective.value(&recovered);
        if best_feasible.as_ref().is_none_or(|(_, v)| value < *v) {
            best_feasible = Some((recovered.clone(), value));
        }

        let done = g <= cfg.feas_tol * p_total && (g.min(0.0) * k).abs() <= cfg.gap_tol * (1.0 + value.abs());
        let solution = |converged: bool, allocation: Vec<f64>, primal_value: f64, min_feasible: f64| DualSolution {
            allocation,
            k,
            primal_value,
            dual_value: best_dual,
            gap: k * g,
            feasibility: g,
            weak_duality_violation: (best_dual - min_feasible).max(0.0),
            dual_iterations: i,
            primal_iterations,
            converged,
        };
        let min_feasible = best_feasible.as_ref().map_or(f64::INFINITY, |(_, v)| *v);
        if done {
            return Ok(solution(true, recovered, value, min_feasible));
        }
        if i == cfg.max_dual_iters {
            let (alloc, v) = best_feasible.clone().expect("at least one iterate");
            last = Some(solution(false, alloc, v, min_feasible));
            break;
        }

        let zeta = cfg.zeta.step(i);
        k = match cfg.scaling {
            StepScaling::Plain => dual_step(k, zeta, g),
            StepScaling::Curvature => {
                let zeta = zeta.min(1.0);
                if inner.sensitivity > 0.0 {
                    dual_step(k, 1.0, zeta * g / inner.sensitivity).clamp(0.1 * k, 10.0 * k.max(f64::MIN_POSITIVE))
                } else if let Some(t) = objective.unlock_price(&inner.allocation, k, g > 0.0) {
                    // g is flat until some agent unlocks: go just past it.
                    let nudge = 1e-10 * t.abs().max(f64::MIN_POSITIVE);
                    (if g > 0.0 { t + nudge } else { t - nudge }).max(0.0)
                } else {
                    dual_step(k, 1.0, zeta * g * k.max(k_ref) / p_total)
                }
            }
        };
        point = inner.allocation;
    }
    Err(DualError::BudgetExhausted { best: Box::new(last.expect("loop ran")) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpt::{CptParams, Pwf};
    use crate::scenario::Agent;
    use crate::surrogate::{SurrogateCase, SurrogatePiece};

    fn exp_surrogate() -> SurrogateUtility {
        // ũ(x) = 1 − e^{−x} for x ≥ 0, slope e^{−x}
        let piece = SurrogatePiece { lam: -1.0, rate: -1.0, center: 0.0, scale: 1.0, offset: 0.0 };
        let params = CptParams {
            alpha: 1.0,
            beta: 1.0,
            lambda1: 1.0,
            lambda2: 2.0,
            gamma1: -1.0,
            gamma2: -1.0,
            mu1: 1.0,
            mu2: 1.0,
            m: 1.0,
            n: 1.0,
            x0: 0.0,
        };
        SurrogateUtility {
            gain: piece,
            loss: SurrogatePiece { lam: -2.0, ..piece },
            breakpoint: 0.0,
            case: SurrogateCase::Case6,
            passthrough: false,
            gain_original: false,
            loss_original: false,
            expansion: 0.0,
            proximal: 0.0,
            params,
        }
    }

    fn unit_problem(n: usize, p_total: f64) -> AllocationProblem {
        let params = exp_surrogate().params;
        AllocationProblem { agents: vec![Agent { params, gain: 1.0, prob: 1.0 }; n], noise_var: 1.0, p_total, pwf: Pwf::Identity }
    }

    #[test]
    fn schedules() {
        let h = StepSchedule::Harmonic { base: 1.0 };
        assert_eq!(h.step(1), 1.0);
        assert_eq!(h.step(4), 0.25);
        assert!(StepSchedule::Power { base: 1.0, exponent: 0.5 }.validate().is_err());
        assert!(StepSchedule::Power { base: 1.0, exponent: 0.6 }.validate().is_ok());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_nonneg(&[-1.0, 2.0, 0.5]), vec![0.0, 2.0, 0.5]);
        assert_eq!(project_nonneg(&[0.0, 3.0]), vec![0.0, 3.0]);
    }

    #[test]
    fn dual_step_examples() {
        assert!((dual_step(0.5, 0.1, -4.0) - 0.1).abs() < 1e-15);
        assert_eq!(dual_step(0.1, 0.1, -4.0), 0.0);
    }

    #[test]
    fn lagrangian_examples() {
        let sur = vec![exp_surrogate(); 3];
        let problem = unit_problem(3, 10.0);
        let obj = SurrogateObjective::new(&sur, &problem).unwrap();
        let p = [1.0, 2.0, 3.0];
        assert_eq!(obj.lagrangian(&p, 0.0), obj.value(&p));
        let g = 6.0 - 10.0;
        assert!((obj.lagrangian(&p, 1.0) - obj.value(&p) - g).abs() < 1e-12);
        let zero = [0.0; 3];
        assert_eq!(obj.lagrangian(&zero, 1.0), -10.0);
    }

    #[test]
    fn single_agent_closed_form() {
        let sur = vec![exp_surrogate()];
        let problem = unit_problem(1, 1.0);
        let obj = SurrogateObjective::new(&sur, &problem).unwrap();
        for k in [0.05, 0.2, 0.5, 0.9] {
            let r = inner_minimize(&obj, k, &DualConfig::default(), &[0.3]).unwrap();
            let expected = (1.0 / k).ln();
            assert!(r.converged);
            assert!((r.allocation[0] - expected).abs() < 1e-9, "k={k} got {}", r.allocation[0]);
        }
    }

    #[test]
    fn large_price_clamps_to_zero() {
        let sur = vec![exp_surrogate(); 2];
        let problem = unit_problem(2, 1.0);
        let obj = SurrogateObjective::new(&sur, &problem).unwrap();
        let r = inner_minimize(&obj, 1e6, &DualConfig::default(), &[0.5, 0.7]).unwrap();
        assert_eq!(r.allocation, vec![0.0, 0.0]);
    }

    #[test]
    fn kink_is_found_exactly() {
        // slopes at the kink are 1 (right) and 2 (left); any k in [1, 2] puts
        // the minimizer on the kink at P = 0.
        let sur = vec![exp_surrogate()];
        let problem = unit_problem(1, 1.0);
        let obj = SurrogateObjective::new(&sur, &problem).unwrap();
        let r = inner_minimize(&obj, 1.5, &DualConfig::default(), &[0.4]).unwrap();
        assert_eq!(r.allocation[0], 0.0);
    }

    #[test]
    fn symmetric_price_matches_marginal_utility() {
        let n = 4;
        let p_total = 2.0;
        let sur = vec![exp_surrogate(); n];
        let problem = unit_problem(n, p_total);
        let obj = SurrogateObjective::new(&sur, &problem).unwrap();
        let sol = dual_ascent(&obj, &DualConfig::default(), &WarmStart::default()).unwrap();
        // k* = ũ'(P_total/N) = e^{−0.5}
        let expected = (-(p_total / n as f64)).exp();
        assert!((sol.k - expected).abs() < 1e-6, "k = {}", sol.k);
        assert!(sol.feasibility.abs() <= 1e-6 * p_total);
        for p in &sol.allocation {
            assert!((p - 0.5).abs() < 1e-6);
        }
        assert!(sol.weak_duality_violation <= 1e-9);
    }

    #[test]
    fn plain_schedules_still_feasible() {
        let sur = vec![exp_surrogate(); 3];
        let problem = unit_problem(3, 1.5);
        let obj = SurrogateObjective::new(&sur, &problem).unwrap();
        let sol = match dual_ascent(&obj, &DualConfig::plain(), &WarmStart::default()) {
            Ok(s) => s,
            Err(DualError::BudgetExhausted { best }) => *best,
            Err(e) => panic!("{e}"),
        };
        assert!(sol.allocation.iter().sum::<f64>() <= 1.5 + 1e-12);
        assert!(sol.allocation.iter().all(|&p| p >= 0.0));
    }
}
