//! Power-allocation instances.
//!
//! Agent `i` receives power `P(i)` and values the resulting SNR
//! `P(i)·|h(i)|²/σ²` through its own CPT utility. The solver minimizes
//! `f(P) = −Σ w(p_i)·u_i(SNR(i))` over `P ≥ 0`, `Σ P ≤ P_total`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::{CptError, CptParams, Pwf, Shape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("allocation has {got} entries, problem has {expected} agents")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bad problem: {0}")]
    BadProblem(String),
    #[error("bad scenario spec: {0}")]
    BadSpec(String),
    #[error("agent {agent}: {source}")]
    Agent { agent: usize, source: CptError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub params: CptParams,
    /// Channel power gain `|h|²`.
    pub gain: f64,
    /// Activity probability.
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub agents: Vec<Agent>,
    /// Noise variance `σ²`.
    pub noise_var: f64,
    pub p_total: f64,
    #[serde(default)]
    pub pwf: Pwf,
}

pub fn snr(power: f64, gain: f64, noise_var: f64) -> f64 {
    power * gain / noise_var
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.agents.is_empty() {
            return Err(ScenarioError::BadProblem("no agents".into()));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(ScenarioError::BadProblem("noise_var must be positive".into()));
        }
        if !(self.p_total > 0.0 && self.p_total.is_finite()) {
            return Err(ScenarioError::BadProblem("p_total must be positive".into()));
        }
        self.pwf.validate().map_err(|source| ScenarioError::Agent { agent: 0, source })?;
        for (i, a) in self.agents.iter().enumerate() {
            a.params.validate().map_err(|source| ScenarioError::Agent { agent: i, source })?;
            if !(a.gain > 0.0 && a.gain.is_finite()) {
                return Err(ScenarioError::BadProblem(format!("agent {i}: gain must be positive")));
            }
            if !(0.0..=1.0).contains(&a.prob) {
                return Err(ScenarioError::BadProblem(format!("agent {i}: prob must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    /// `|h(i)|²/σ²`: SNR per unit power.
    pub fn snr_per_power(&self, i: usize) -> f64 {
        self.agents[i].gain / self.noise_var
    }

    pub fn snr(&self, i: usize, power: f64) -> f64 {
        snr(power, self.agents[i].gain, self.noise_var)
    }

    /// Probability weights `w(p_i)`.
    pub fn weights(&self) -> Result<Vec<f64>, ScenarioError> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| self.pwf.apply(a.prob).map_err(|source| ScenarioError::Agent { agent: i, source }))
            .collect()
    }

    /// Budget constraint `g(P) = Σ P − P_total`.
    pub fn budget_slack(&self, allocation: &[f64]) -> f64 {
        allocation.iter().sum::<f64>() - self.p_total
    }

    pub fn check_dimension(&self, allocation: &[f64]) -> Result<(), ScenarioError> {
        if allocation.len() != self.len() {
            return Err(ScenarioError::DimensionMismatch { expected: self.len(), got: allocation.len() });
        }
        Ok(())
    }

    /// `f(P) = −Σ w(p_i)·u_i(SNR(i))`.
    pub fn objective(&self, allocation: &[f64]) -> Result<f64, ScenarioError> {
        self.check_dimension(allocation)?;
        let mut total = 0.0;
        for (i, (a, &p)) in self.agents.iter().zip(allocation).enumerate() {
            let w = self.pwf.apply(a.prob).map_err(|source| ScenarioError::Agent { agent: i, source })?;
            let u = a.params.utility(self.snr(i, p)).map_err(|source| ScenarioError::Agent { agent: i, source })?;
            total += w * u;
        }
        Ok(-total)
    }

    /// Equal split `P_total/N`.
    pub fn equal_split(&self) -> Vec<f64> {
        vec![self.p_total / self.len() as f64; self.len()]
    }
}

/// Named distributions over agent preference models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSampler {
    /// Concave gains, convex losses, loss averse.
    #[default]
    SShaped,
    /// Concave on both sides, loss averse.
    Concave,
    /// Each side independently concave or convex, loss averse.
    Mixed,
}

impl ParamSampler {
    /// Shapes every sampled agent is promised to have; `None` where either
    /// curvature may occur.
    pub fn promised_shapes(self) -> (Option<Shape>, Option<Shape>) {
        match self {
            ParamSampler::SShaped => (Some(Shape::Concave), Some(Shape::Convex)),
            ParamSampler::Concave => (Some(Shape::Concave), Some(Shape::Concave)),
            ParamSampler::Mixed => (None, None),
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Draws one side of a utility with the requested curvature sign. Returns
/// `(curv, gamma, lambda)` such that the exponent rate `curv/gamma` has
/// `rate_sign`, the slope at the reference point is `slope`, and `λ/γ < 0`.
fn draw_side<R: Rng + ?Sized>(rng: &mut R, rate_sign: f64, rate_range: (f64, f64), slope: f64, scale: f64) -> (f64, f64, f64) {
    let gamma = random_sign(rng) * uniform(rng, 0.5, 2.0);
    let rate = rate_sign * uniform(rng, rate_range.0, rate_range.1);
    let curv = rate * gamma;
    // slope = −λ/(γ·scale)
    let lambda = -slope * gamma * scale;
    (curv, gamma, lambda)
}

/// Curvature of one side of a sampled utility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Concave,
    Convex,
}

/// Samples a loss-averse, increasing utility with the given curvature on each
/// side. `reference` is the reference point; μ1 = μ2 = 1.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, gain: Curvature, loss: Curvature, reference: f64) -> CptParams {
    let m = uniform(rng, 1.0, 3.0);
    let n = uniform(rng, 1.0, 3.0);
    let gain_slope = uniform(rng, 0.5, 1.5);
    let loss_slope = gain_slope * uniform(rng, 1.5, 3.0);
    // Convex gains grow exponentially with SNR; keep them gentle.
    let (gain_sign, gain_range) = match gain {
        Curvature::Concave => (-1.0, (0.2, 1.0)),
        Curvature::Convex => (1.0, (0.02, 0.15)),
    };
    let (loss_sign, loss_range) = match loss {
        Curvature::Concave => (-1.0, (0.2, 1.0)),
        Curvature::Convex => (1.0, (0.2, 1.0)),
    };
    let (alpha, gamma1, lambda1) = draw_side(rng, gain_sign, gain_range, gain_slope, m);
    let (beta, gamma2, lambda2) = draw_side(rng, loss_sign, loss_range, loss_slope, n);
    CptParams { alpha, beta, lambda1, lambda2, gamma1, gamma2, mu1: 1.0, mu2: 1.0, m, n, x0: reference }
}

impl ParamSampler {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R, reference: f64) -> CptParams {
        let (gain, loss) = match self {
            ParamSampler::SShaped => (Curvature::Concave, Curvature::Convex),
            ParamSampler::Concave => (Curvature::Concave, Curvature::Concave),
            ParamSampler::Mixed => {
                let pick = |r: &mut R| if r.random_bool(0.5) { Curvature::Concave } else { Curvature::Convex };
                (pick(rng), pick(rng))
            }
        };
        sample_params(rng, gain, loss, reference)
    }
}

fn default_mean_snr_db() -> f64 {
    7.0
}

fn default_p_total() -> f64 {
    1.0
}

fn default_prob() -> f64 {
    1.0
}

/// Recipe for a random instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub n_agents: usize,
    /// Average SNR under equal power allocation, in dB.
    #[serde(default = "default_mean_snr_db")]
    pub mean_snr_db: f64,
    #[serde(default = "default_p_total")]
    pub p_total: f64,
    #[serde(default, rename = "sampler")]
    pub param_sampler: ParamSampler,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pwf: Pwf,
    /// Activity probability given to every agent.
    #[serde(default = "default_prob")]
    pub prob: f64,
}

impl ScenarioSpec {
    pub fn new(n_agents: usize, seed: u64) -> Self {
        Self {
            n_agents,
            mean_snr_db: default_mean_snr_db(),
            p_total: default_p_total(),
            param_sampler: ParamSampler::default(),
            seed,
            pwf: Pwf::Identity,
            prob: default_prob(),
        }
    }

    pub fn with_sampler(mut self, sampler: ParamSampler) -> Self {
        self.param_sampler = sampler;
        self
    }

    /// Linear SNR at equal split for a unit-mean gain.
    pub fn mean_snr_linear(&self) -> f64 {
        10f64.powf(self.mean_snr_db / 10.0)
    }

    /// Noise variance that puts the mean equal-split SNR at the target.
    pub fn noise_var(&self) -> f64 {
        (self.p_total / self.n_agents as f64) / self.mean_snr_linear()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::BadSpec(m.into()));
        if self.n_agents == 0 {
            return bad("n_agents must be positive");
        }
        if !self.mean_snr_db.is_finite() {
            return bad("mean_snr_db must be finite");
        }
        if !(self.p_total > 0.0 && self.p_total.is_finite()) {
            return bad("p_total must be positive");
        }
        if !(0.0..=1.0).contains(&self.prob) {
            return bad("prob must lie in [0, 1]");
        }
        if self.pwf.validate().is_err() {
            return bad("pwf delta must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Draws a reproducible instance: exponential unit-mean channel gains, noise
/// calibrated to the target equal-split SNR, reference SNRs uniform in
/// `[0.5, 2]×` the mean equal-split SNR.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<AllocationProblem, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mean_snr = spec.mean_snr_linear();
    let gains: Vec<f64> = (0..spec.n_agents).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let agents = gains
        .into_iter()
        .map(|gain| {
            let reference = mean_snr * uniform(&mut rng, 0.5, 2.0);
            Agent { params: spec.param_sampler.sample(&mut rng, reference), gain, prob: spec.prob }
        })
        .collect();
    let problem = AllocationProblem { agents, noise_var: spec.noise_var(), p_total: spec.p_total, pwf: spec.pwf };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(params: CptParams) -> AllocationProblem {
        AllocationProblem { agents: vec![Agent { params, gain: 1.0, prob: 1.0 }], noise_var: 1.0, p_total: 1.0, pwf: Pwf::Identity }
    }

    fn unit_params() -> CptParams {
        CptParams {
            alpha: 1.0,
            beta: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            gamma1: -1.0,
            gamma2: -1.0,
            mu1: 1.0,
            mu2: 1.0,
            m: 1.0,
            n: 1.0,
            x0: 0.0,
        }
    }

    #[test]
    fn snr_examples() {
        assert_eq!(snr(1.0, 1.0, 1.0), 1.0);
        assert_eq!(snr(2.0, 0.5, 0.25), 4.0);
        assert_eq!(snr(0.0, 3.0, 0.7), 0.0);
    }

    #[test]
    fn objective_single_agent() {
        let f = single(unit_params()).objective(&[1.0]).unwrap();
        assert!((f + (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn objective_zero_allocation() {
        let mut p = single(unit_params());
        p.agents.push(p.agents[0]);
        assert_eq!(p.objective(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn objective_dimension_mismatch() {
        assert_eq!(single(unit_params()).objective(&[1.0, 2.0]), Err(ScenarioError::DimensionMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn noise_calibration_example() {
        let spec = ScenarioSpec { p_total: 10.0, ..ScenarioSpec::new(10, 1) };
        let expected = 1.0 / 10f64.powf(0.7);
        assert!((spec.noise_var() - expected).abs() < 1e-15);
        assert!((spec.noise_var() - 0.19953).abs() < 1e-5);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ScenarioSpec::new(7, 99);
        assert_eq!(generate_scenario(&spec).unwrap(), generate_scenario(&spec).unwrap());
        let other = ScenarioSpec::new(7, 100);
        assert_ne!(generate_scenario(&spec).unwrap(), generate_scenario(&other).unwrap());
    }

    #[test]
    fn bad_spec_is_rejected() {
        assert!(matches!(generate_scenario(&ScenarioSpec::new(0, 1)), Err(ScenarioError::BadSpec(_))));
    }

    #[test]
    fn sampled_regimes_classify_as_promised() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for sampler in [ParamSampler::SShaped, ParamSampler::Concave, ParamSampler::Mixed] {
            let (gain, loss) = sampler.promised_shapes();
            for _ in 0..200 {
                let p = sampler.sample(&mut rng, 3.0);
                p.validate().unwrap();
                let class = p.classify_shape();
                assert!(gain.is_none_or(|s| s == class.gain_shape), "{sampler:?} {class:?}");
                assert!(loss.is_none_or(|s| s == class.loss_shape), "{sampler:?} {class:?}");
                assert!(matches!(class.gain_shape, Shape::Concave | Shape::Convex));
                assert!(matches!(class.loss_shape, Shape::Concave | Shape::Convex));
                assert!(p.loss_slope_at_reference() > p.gain_slope_at_reference());
            }
        }
    }
}
