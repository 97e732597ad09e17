//! Concave minorants of the CPT utility.
//!
//! At each outer iterate every agent's utility `u` is replaced by a concave
//! function `ũ(· | x_l)` that touches `u` at the expansion point `x_l`,
//! matches its slope there and stays below it everywhere. Each side of the
//! reference point is either kept (when already concave) or replaced by an
//! exponential piece
//!
//! ```text
//! ũ(x) = offset + lam · (1 − exp(rate · (x − center)/scale)) / rate
//! ```
//!
//! with `rate < 0` and `lam < 0`, so its slope `−(lam/scale)·exp(…)` is
//! positive and decreasing. Which side is replaced, and where the piece is
//! centered, depends on the curvature signs `α/γ1`, `β/γ2` and on where
//! `x_l` sits relative to `x0` ([`SurrogateCase`]).
//!
//! [`verify_construction_rules`] numbers the properties it checks:
//! 1. `ũ` is strongly concave on each side;
//! 2. value and slope match `u` at `x_l`;
//! 3. `ũ` is continuously differentiable away from `x0`;
//! 4. pieces are exponentials of the form above (by construction);
//! 5. `ũ ≤ u` everywhere;
//! 6. as `x_l → x0` the slopes at `x0` converge to those of the surrogate
//!    built at `x0`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::{CptError, CptParams, Side, EXP_CLIP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error(transparent)]
    Params(#[from] CptError),
    #[error("no surrogate case applies (α/γ1 = {gain_rate}, β/γ2 = {loss_rate}, x = {expansion})")]
    NoCaseApplies { gain_rate: f64, loss_rate: f64, expansion: f64 },
    #[error("no concave junction at the reference point: loss-side slope {loss_slope} < gain-side slope {gain_slope}")]
    SlopeOrderViolation { loss_slope: f64, gain_slope: f64 },
    #[error("utility must be increasing on both sides of the reference point (λ1/γ1 and λ2/γ2 negative)")]
    NotIncreasing,
    #[error("invalid surrogate config: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurrogateCase {
    /// Concave on both sides; the utility is its own surrogate.
    Case1,
    /// Concave gain, convex loss, expansion on the gain side.
    Case2,
    /// Convex gain, expansion strictly on the gain side.
    Case3,
    /// Convex gain, concave loss, expansion on the loss side.
    Case4,
    /// Convex loss, expansion strictly on the loss side.
    Case5,
    /// Convex on both sides, expansion at the reference point.
    Case6,
}

impl SurrogateCase {
    pub const ALL: [SurrogateCase; 6] = [
        SurrogateCase::Case1,
        SurrogateCase::Case2,
        SurrogateCase::Case3,
        SurrogateCase::Case4,
        SurrogateCase::Case5,
        SurrogateCase::Case6,
    ];

    pub fn index(self) -> usize {
        self as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Free exponent rates are at most `-curvature_floor`.
    pub curvature_floor: f64,
    /// Weight `τ` of the optional proximal term `−τ·(x − x_l)²`.
    pub proximal: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { curvature_floor: 1e-3, proximal: 0.0 }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.curvature_floor > 0.0 && self.curvature_floor.is_finite()) {
            return Err(SurrogateError::Config("curvature_floor must be positive"));
        }
        if !(self.proximal >= 0.0 && self.proximal.is_finite()) {
            return Err(SurrogateError::Config("proximal must be nonnegative"));
        }
        Ok(())
    }

    /// Default choice for a rate bounded above by `bound`: as curved as the
    /// original side (`reference`), never flatter than the floor.
    fn rate(&self, bound: f64, reference: f64) -> f64 {
        bound.min(-reference.abs().max(self.curvature_floor))
    }
}

/// `offset + lam · (1 − exp(rate · (x − center)/scale)) / rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePiece {
    pub lam: f64,
    pub rate: f64,
    pub center: f64,
    pub scale: f64,
    pub offset: f64,
}

/// `expm1(t)/t`, continuous through `t = 0`.
fn expm1_ratio(t: f64) -> f64 {
    if t.abs() < 1e-5 {
        1.0 + t / 2.0 + t * t / 6.0
    } else if t > EXP_CLIP {
        EXP_CLIP.exp_m1() / EXP_CLIP
    } else {
        t.exp_m1() / t
    }
}

impl SurrogatePiece {
    fn z(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    pub fn value(&self, x: f64) -> f64 {
        let z = self.z(x);
        self.offset - self.lam * z * expm1_ratio(self.rate * z)
    }

    pub fn slope(&self, x: f64) -> f64 {
        let t = (self.rate * self.z(x)).min(EXP_CLIP);
        -(self.lam / self.scale) * t.exp()
    }

    pub fn second(&self, x: f64) -> f64 {
        self.slope(x) * self.rate / self.scale
    }

    /// Concave with curvature bounded away from zero on bounded sets.
    pub fn is_strictly_concave(&self, curvature_floor: f64) -> bool {
        self.rate <= -curvature_floor && self.lam * self.rate > 0.0
    }
}

/// Per-agent surrogate utility around an expansion point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateUtility {
    pub gain: SurrogatePiece,
    pub loss: SurrogatePiece,
    pub breakpoint: f64,
    pub case: SurrogateCase,
    /// Case 1: the utility itself is used.
    pub passthrough: bool,
    /// The gain side is the original utility (Cases 1 and 2).
    pub gain_original: bool,
    /// The loss side is the original utility (Cases 1 and 4).
    pub loss_original: bool,
    pub expansion: f64,
    pub proximal: f64,
    pub params: CptParams,
}

impl SurrogateUtility {
    pub fn value(&self, x: f64) -> f64 {
        let base = if x >= self.breakpoint {
            if self.gain_original {
                self.params.utility(x).unwrap_or_else(|_| self.gain.value(x))
            } else {
                self.gain.value(x)
            }
        } else if self.loss_original {
            self.params.utility(x).unwrap_or_else(|_| self.loss.value(x))
        } else {
            self.loss.value(x)
        };
        let d = x - self.expansion;
        base - self.proximal * d * d
    }

    fn side_slope(&self, gain_side: bool, x: f64) -> f64 {
        let (original, piece, side) =
            if gain_side { (self.gain_original, &self.gain, Side::Right) } else { (self.loss_original, &self.loss, Side::Left) };
        let s = if original { self.params.derivative(x, side).unwrap_or_else(|_| piece.slope(x)) } else { piece.slope(x) };
        s - 2.0 * self.proximal * (x - self.expansion)
    }

    /// Slope of the surrogate; at the breakpoint `side` picks the piece.
    pub fn slope(&self, x: f64, side: Side) -> Result<f64, CptError> {
        if x == self.breakpoint {
            return match side {
                Side::Right => Ok(self.side_slope(true, x)),
                Side::Left => Ok(self.side_slope(false, x)),
                Side::TwoSided => Err(CptError::KinkAt(self.breakpoint)),
            };
        }
        Ok(self.side_slope(x > self.breakpoint, x))
    }

    /// Right-hand slope at the breakpoint, ordinary slope elsewhere.
    pub fn subgradient(&self, x: f64) -> f64 {
        self.side_slope(x >= self.breakpoint, x)
    }

    /// Second derivative of the piece active at `x` (gain piece at the
    /// breakpoint when `right` is set).
    pub fn second(&self, x: f64, right: bool) -> f64 {
        let gain_side = x > self.breakpoint || (x == self.breakpoint && right);
        let s = if gain_side {
            if self.gain_original {
                self.params.second_derivative(x).unwrap_or_else(|_| self.gain.second(x))
            } else {
                self.gain.second(x)
            }
        } else if self.loss_original && x < self.breakpoint {
            self.params.second_derivative(x).unwrap_or_else(|_| self.loss.second(x))
        } else {
            self.loss.second(x)
        };
        s - 2.0 * self.proximal
    }
}

fn original_gain(p: &CptParams) -> SurrogatePiece {
    SurrogatePiece { lam: p.lambda1 / p.gamma1, rate: p.gain_rate(), center: p.x0, scale: p.m, offset: p.reference_value() }
}

fn original_loss(p: &CptParams) -> SurrogatePiece {
    SurrogatePiece { lam: p.lambda2 / p.gamma2, rate: p.loss_rate(), center: p.x0, scale: p.n, offset: p.loss_limit_at_reference() }
}

/// Picks the construction case for an expansion point.
pub fn select_case(p: &CptParams, expansion: f64) -> Result<SurrogateCase, SurrogateError> {
    p.validate()?;
    let a = p.gain_rate();
    let b = p.loss_rate();
    let no_case = || SurrogateError::NoCaseApplies { gain_rate: a, loss_rate: b, expansion };
    if a.is_nan() || b.is_nan() || expansion.is_nan() {
        return Err(no_case());
    }
    let x0 = p.x0;
    Ok(match (a < 0.0, b < 0.0) {
        (true, true) => SurrogateCase::Case1,
        (true, false) if expansion >= x0 => SurrogateCase::Case2,
        (true, false) => SurrogateCase::Case5,
        (false, true) if expansion <= x0 => SurrogateCase::Case4,
        (false, true) => SurrogateCase::Case3,
        (false, false) if expansion > x0 => SurrogateCase::Case3,
        (false, false) if expansion < x0 => SurrogateCase::Case5,
        (false, false) => SurrogateCase::Case6,
    })
}

/// Builds the surrogate of `p` around `expansion`.
pub fn build_surrogate(p: &CptParams, expansion: f64, cfg: &SurrogateConfig) -> Result<SurrogateUtility, SurrogateError> {
    cfg.validate()?;
    let case = select_case(p, expansion)?;
    if p.lambda1 / p.gamma1 >= 0.0 || p.lambda2 / p.gamma2 >= 0.0 {
        return Err(SurrogateError::NotIncreasing);
    }
    let (a, b, x0) = (p.gain_rate(), p.loss_rate(), p.x0);
    let slope_right = p.gain_slope_at_reference();
    let slope_left = p.loss_slope_at_reference();
    let at_reference = p.reference_value();

    let mut gain = original_gain(p);
    let mut loss = original_loss(p);
    let (mut gain_original, mut loss_original) = (false, false);

    match case {
        SurrogateCase::Case1 => {
            gain_original = true;
            loss_original = true;
        }
        SurrogateCase::Case2 => {
            gain_original = true;
            loss = SurrogatePiece { lam: -p.n * slope_left, rate: cfg.rate(0.0, b), center: x0, scale: p.n, offset: at_reference };
        }
        SurrogateCase::Case4 => {
            loss_original = true;
            gain = SurrogatePiece {
                lam: -p.m * slope_right,
                rate: cfg.rate(0.0, a),
                center: x0,
                scale: p.m,
                offset: p.loss_limit_at_reference(),
            };
        }
        SurrogateCase::Case6 => {
            gain = SurrogatePiece { lam: -p.m * slope_right, rate: cfg.rate(0.0, a), center: x0, scale: p.m, offset: at_reference };
            loss = SurrogatePiece { lam: -p.n * slope_left, rate: cfg.rate(0.0, b), center: x0, scale: p.n, offset: at_reference };
        }
        SurrogateCase::Case3 => {
            let value = p.utility(expansion)?;
            let slope = p.derivative(expansion, Side::TwoSided)?;
            gain = SurrogatePiece { lam: -p.m * slope, rate: cfg.rate(0.0, a), center: expansion, scale: p.m, offset: value };
            // The loss piece starts at the gain piece's value at x0 and is at
            // least as steep as both the original loss side and the gain piece.
            let junction = slope_left.max(gain.slope(x0));
            loss = SurrogatePiece { lam: -p.n * junction, rate: cfg.rate(b.min(0.0), b), center: x0, scale: p.n, offset: gain.value(x0) };
        }
        SurrogateCase::Case5 => {
            let value = p.utility(expansion)?;
            let slope = p.derivative(expansion, Side::TwoSided)?;
            loss = SurrogatePiece { lam: -p.n * slope, rate: cfg.rate(0.0, b), center: expansion, scale: p.n, offset: value };
            let junction = slope_right.min(loss.slope(x0));
            gain = SurrogatePiece { lam: -p.m * junction, rate: cfg.rate(a.min(0.0), a), center: x0, scale: p.m, offset: loss.value(x0) };
        }
    }

    let s = SurrogateUtility {
        gain,
        loss,
        breakpoint: x0,
        case,
        passthrough: case == SurrogateCase::Case1,
        gain_original,
        loss_original,
        expansion,
        proximal: cfg.proximal,
        params: *p,
    };
    let gain_slope = s.side_slope(true, x0) + 2.0 * s.proximal * (x0 - expansion);
    let loss_slope = s.side_slope(false, x0) + 2.0 * s.proximal * (x0 - expansion);
    // Cases 3 and 5 match the slopes exactly; allow rounding in that tie.
    if loss_slope < gain_slope - 1e-12 * gain_slope.abs() {
        return Err(SurrogateError::SlopeOrderViolation { loss_slope, gain_slope });
    }
    Ok(s)
}

/// Tolerances used by [`verify_construction_rules`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleThresholds {
    pub touch: f64,
    pub minorization: f64,
    pub slope_jump: f64,
    pub rule6_window: f64,
    pub rule6: f64,
    pub second_difference: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self { touch: 1e-10, minorization: 1e-9, slope_jump: 1e-6, rule6_window: 1e-7, rule6: 1e-6, second_difference: 1e-9 }
    }
}

/// Outcome of checking the construction rules on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleReport {
    pub case: SurrogateCase,
    /// Rule 1: `min(−ũ'')` over the grid; strictly positive means strongly
    /// concave on the grid's hull with that modulus.
    pub concavity_margin: f64,
    /// Largest second difference of `ũ` (scaled by `max(1, |ũ|)`) over
    /// consecutive grid triples; includes the kink.
    pub max_second_difference: f64,
    pub value_error: f64,
    /// Rule 2: slope mismatch at the expansion point (one-sided at the kink).
    pub gradient_error: f64,
    /// Rule 3: largest slope jump away from the breakpoint.
    pub slope_jump: f64,
    /// Rule 5: `min(u − ũ)` over the grid.
    pub minorization_margin: f64,
    /// Rule 6: one-sided slope mismatch at `x0`, when the expansion point is
    /// within the window of it.
    pub rule6_error: Option<f64>,
    /// Grid points skipped because `u` overflowed.
    pub skipped: usize,
}

impl RuleReport {
    pub fn rule1(&self) -> bool {
        self.concavity_margin > 0.0
    }

    pub fn rule2(&self, t: &RuleThresholds) -> bool {
        self.gradient_error <= t.touch && self.value_error <= t.touch
    }

    pub fn rule3(&self, t: &RuleThresholds) -> bool {
        self.slope_jump <= t.slope_jump
    }

    pub fn rule5(&self, t: &RuleThresholds) -> bool {
        self.minorization_margin >= -t.minorization
    }

    pub fn rule6(&self, t: &RuleThresholds) -> bool {
        self.rule6_error.is_none_or(|e| e <= t.rule6)
    }

    pub fn composite_concave(&self, t: &RuleThresholds) -> bool {
        self.max_second_difference <= t.second_difference
    }

    pub fn passes(&self, t: &RuleThresholds) -> bool {
        self.rule1() && self.rule2(t) && self.rule3(t) && self.rule5(t) && self.rule6(t) && self.composite_concave(t)
    }
}

/// Checks a built surrogate against the construction rules on `grid`
/// (sorted ascending, uniformly spaced for the second differences).
pub fn verify_construction_rules(s: &SurrogateUtility, expansion: f64, grid: &[f64], t: &RuleThresholds) -> RuleReport {
    assert!(!grid.is_empty(), "rule check needs a nonempty grid");
    let p = &s.params;
    let x0 = s.breakpoint;

    let mut concavity_margin = f64::INFINITY;
    let mut minorization_margin = f64::INFINITY;
    let mut slope_jump: f64 = 0.0;
    let mut skipped = 0;
    let values: Vec<f64> = grid.iter().map(|&x| s.value(x)).collect();
    for &x in grid {
        concavity_margin = concavity_margin.min(-s.second(x, true));
        if x == x0 {
            concavity_margin = concavity_margin.min(-s.second(x, false));
        }
        match p.utility(x) {
            Ok(u) => minorization_margin = minorization_margin.min(u - s.value(x)),
            Err(_) => skipped += 1,
        }
        let h = 1e-9 * (1.0 + x.abs());
        if (x - x0).abs() > 2.0 * h {
            let right = s.subgradient(x + h);
            let left = s.subgradient(x - h);
            slope_jump = slope_jump.max((right - left).abs() / (1.0 + left.abs()));
        }
    }

    let max_second_difference =
        values.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]) / w[1].abs().max(1.0)).fold(f64::NEG_INFINITY, f64::max);

    let value_error = match p.utility(expansion) {
        Ok(u) => (s.value(expansion) - u).abs(),
        Err(_) => f64::INFINITY,
    };
    let gradient_error = if expansion == x0 {
        let r = (s.slope(x0, Side::Right).unwrap() - p.gain_slope_at_reference()).abs();
        let l = (s.slope(x0, Side::Left).unwrap() - p.loss_slope_at_reference()).abs();
        r.max(l)
    } else {
        match (s.slope(expansion, Side::TwoSided), p.derivative(expansion, Side::TwoSided)) {
            (Ok(a), Ok(b)) => (a - b).abs(),
            _ => f64::INFINITY,
        }
    };
    let rule6_error = ((expansion - x0).abs() <= t.rule6_window).then(|| {
        let r = (s.slope(x0, Side::Right).unwrap() - p.gain_slope_at_reference()).abs();
        let l = (s.slope(x0, Side::Left).unwrap() - p.loss_slope_at_reference()).abs();
        r.max(l)
    });

    RuleReport {
        case: s.case,
        concavity_margin,
        max_second_difference: if grid.len() < 3 { 0.0 } else { max_second_difference },
        value_error,
        gradient_error,
        slope_jump,
        minorization_margin,
        rule6_error,
        skipped,
    }
}

/// A deliberately linear "surrogate": the tangent of `u` at the expansion
/// point on both sides. Satisfies touch and gradient match but not strong
/// concavity; used to exercise the rule checker.
pub fn tangent_surrogate(p: &CptParams, expansion: f64) -> Result<SurrogateUtility, SurrogateError> {
    let side = if expansion == p.x0 { Side::Right } else { Side::TwoSided };
    let slope = p.derivative(expansion, side)?;
    let value = p.utility(expansion)?;
    let line = |scale: f64| SurrogatePiece { lam: -scale * slope, rate: 0.0, center: expansion, scale, offset: value };
    Ok(SurrogateUtility {
        gain: line(p.m),
        loss: line(p.n),
        breakpoint: p.x0,
        case: select_case(p, expansion)?,
        passthrough: false,
        gain_original: false,
        loss_original: false,
        expansion,
        proximal: 0.0,
        params: *p,
    })
}

/// Random increasing, loss-averse parameters and an expansion point for
/// which [`select_case`] returns `case`. Exponent rates stay in
/// `[0.05, 1.5]` in magnitude and the expansion point within five scale
/// lengths of `x0`.
pub fn sample_case_instance<R: Rng + ?Sized>(rng: &mut R, case: SurrogateCase) -> (CptParams, f64) {
    use SurrogateCase::*;
    // (gain rate sign, loss rate sign) with +1 for ≥ 0; 0 means either.
    let (gain_sign, loss_sign) = match case {
        Case1 => (-1.0, -1.0),
        Case2 => (-1.0, 1.0),
        Case3 => (1.0, 0.0),
        Case4 => (1.0, -1.0),
        Case5 => (0.0, 1.0),
        Case6 => (1.0, 1.0),
    };
    let pick = |rng: &mut R, sign: f64| {
        let sign = if sign == 0.0 {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        } else {
            sign
        };
        sign * rng.random_range(0.05..1.5)
    };
    let gain_rate = pick(rng, gain_sign);
    let loss_rate = pick(rng, loss_sign);
    let gain_slope = rng.random_range(0.3..2.0);
    let loss_slope = gain_slope * rng.random_range(1.05..3.0);
    let m = rng.random_range(0.5..3.0);
    let n = rng.random_range(0.5..3.0);
    let gamma = |rng: &mut R| if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.5..2.0);
    let gamma1 = gamma(rng);
    let gamma2 = gamma(rng);
    let x0 = rng.random_range(0.0..10.0);
    let params = CptParams {
        alpha: gain_rate * gamma1,
        beta: loss_rate * gamma2,
        lambda1: -gain_slope * gamma1 * m,
        lambda2: -loss_slope * gamma2 * n,
        gamma1,
        gamma2,
        mu1: 1.0,
        mu2: 1.0,
        m,
        n,
        x0,
    };
    let above = x0 + m * rng.random_range(0.01..5.0);
    let below = x0 - n * rng.random_range(0.01..5.0);
    let expansion = match case {
        Case1 => {
            if rng.random_bool(0.5) {
                above
            } else {
                below
            }
        }
        Case2 | Case3 => above,
        Case4 | Case5 => below,
        Case6 => x0,
    };
    (params, expansion)
}

/// Uniform grid of `points` values on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (points - 1) as f64;
            (0..points).map(|i| if i + 1 == points { hi } else { lo + h * i as f64 }).collect()
        }
    }
}
