//! Generalized CPT utility.
//!
//! Each agent values an outcome `x` relative to a reference point `x0`:
//!
//! ```text
//!         λ1 · (μ1 − exp((α/γ1) · (x − x0)/m)) / α     x ≥ x0   (gain)
//! u(x) =
//!         λ2 · (μ2 − exp((β/γ2) · (x − x0)/n)) / β     x < x0   (loss)
//! ```
//!
//! The family covers constant, linear, convex and concave shapes on either
//! side of the reference point (see [`ShapeClass`]). The kink at `x0` is what
//! makes the allocation problem nonsmooth; [`CptParams::decompose`] splits it
//! off as a convex hinge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnitude below which `α`, `β` (or `γ`) are treated as being at their limit.
pub const EPS_LIMIT: f64 = 1e-8;

/// Positive exponents are clipped here before `exp`.
pub const EXP_CLIP: f64 = 700.0;

/// Positive exponents beyond this raise [`CptError::Overflow`].
pub const EXP_HARD_CAP: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CptError {
    #[error("invalid CPT parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: &'static str },
    #[error("exponent {exponent} exceeds the representable range; clip or rescale the SNR")]
    Overflow { exponent: f64 },
    #[error("utility is not differentiable at the reference point {0}")]
    KinkAt(f64),
    #[error("probability {0} is outside [0, 1]")]
    ProbOutOfRange(f64),
}

/// Which one-sided (or ordinary) derivative to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
    TwoSided,
}

/// Per-agent preference model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub m: f64,
    pub n: f64,
    /// Reference point.
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Constant,
    Linear,
    Convex,
    Concave,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeClass {
    pub gain_shape: Shape,
    pub loss_shape: Shape,
}

/// One side of the utility, written generically as
/// `lam · (mu − exp(curv/gamma · (x − x0)/scale)) / curv`.
#[derive(Debug, Clone, Copy)]
struct Branch {
    lam: f64,
    curv: f64,
    gamma: f64,
    mu: f64,
    scale: f64,
    x0: f64,
}

impl Branch {
    fn rate(&self) -> f64 {
        self.curv / self.gamma
    }

    fn exponent(&self, x: f64) -> f64 {
        self.rate() * (x - self.x0) / self.scale
    }

    fn value(&self, x: f64) -> Result<f64, CptError> {
        let z = (x - self.x0) / self.scale;
        let t = self.rate() * z;
        let v = if self.curv.abs() < EPS_LIMIT {
            // (1 − e^{t})/curv = −(z/γ)·(1 + t/2 + t²/6) + O(curv³); the
            // (μ − 1)/curv part vanishes because validation pins μ = 1 here.
            -self.lam * z / self.gamma * (1.0 + t / 2.0 + t * t / 6.0)
        } else {
            let e = guarded_exp_m1(t)?;
            self.lam * ((self.mu - 1.0) - e) / self.curv
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CptError::Overflow { exponent: t })
        }
    }

    /// Value of the branch formula at its own reference point.
    fn anchor(&self) -> f64 {
        if self.curv.abs() < EPS_LIMIT {
            0.0
        } else {
            self.lam * (self.mu - 1.0) / self.curv
        }
    }

    fn slope_at_anchor(&self) -> f64 {
        -self.lam / (self.gamma * self.scale)
    }

    fn slope(&self, x: f64) -> Result<f64, CptError> {
        let t = self.exponent(x);
        Ok(self.slope_at_anchor() * guarded_exp(t)?)
    }

    fn second(&self, x: f64) -> Result<f64, CptError> {
        let t = self.exponent(x);
        Ok(self.slope_at_anchor() * self.rate() / self.scale * guarded_exp(t)?)
    }
}

fn check_exponent(t: f64) -> Result<f64, CptError> {
    if t.is_nan() || t > EXP_HARD_CAP {
        Err(CptError::Overflow { exponent: t })
    } else {
        Ok(t.min(EXP_CLIP))
    }
}

fn guarded_exp(t: f64) -> Result<f64, CptError> {
    check_exponent(t).map(f64::exp)
}

fn guarded_exp_m1(t: f64) -> Result<f64, CptError> {
    check_exponent(t).map(f64::exp_m1)
}

fn invalid(field: &'static str, reason: &'static str) -> CptError {
    CptError::InvalidParams { field, reason }
}

impl CptParams {
    fn gain(&self) -> Branch {
        Branch { lam: self.lambda1, curv: self.alpha, gamma: self.gamma1, mu: self.mu1, scale: self.m, x0: self.x0 }
    }

    fn loss(&self) -> Branch {
        Branch { lam: self.lambda2, curv: self.beta, gamma: self.gamma2, mu: self.mu2, scale: self.n, x0: self.x0 }
    }

    /// Checks the parameter invariants, reporting the first violated field.
    pub fn validate(&self) -> Result<(), CptError> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("m", self.m),
            ("n", self.n),
            ("x0", self.x0),
        ];
        for (field, v) in fields {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        if self.gamma1 == 0.0 {
            return Err(invalid("gamma1", "must be nonzero"));
        }
        if self.gamma2 == 0.0 {
            return Err(invalid("gamma2", "must be nonzero"));
        }
        if self.lambda1 == 0.0 {
            return Err(invalid("lambda1", "must be nonzero"));
        }
        if self.lambda2 == 0.0 {
            return Err(invalid("lambda2", "must be nonzero"));
        }
        if self.m <= 0.0 {
            return Err(invalid("m", "must be positive"));
        }
        if self.n <= 0.0 {
            return Err(invalid("n", "must be positive"));
        }
        if self.alpha.abs() < EPS_LIMIT && self.mu1 != 1.0 {
            return Err(invalid("mu1", "must equal 1 in the linear limit alpha -> 0"));
        }
        if self.beta.abs() < EPS_LIMIT && self.mu2 != 1.0 {
            return Err(invalid("mu2", "must equal 1 in the linear limit beta -> 0"));
        }
        Ok(())
    }

    pub fn classify_shape(&self) -> ShapeClass {
        self.classify_shape_with(EPS_LIMIT)
    }

    /// Table of shapes per subdomain; `eps_limit` decides when a parameter
    /// counts as having reached its limit.
    pub fn classify_shape_with(&self, eps_limit: f64) -> ShapeClass {
        let gain_shape = {
            let (a, g, l, mu, m) = (self.alpha, self.gamma1, self.lambda1, self.mu1, self.m);
            if m <= 0.0 {
                Shape::Other
            } else if g < 0.0 && g.abs() < eps_limit && a > 0.0 && l * mu > 0.0 {
                Shape::Constant
            } else if a.abs() < eps_limit && l / g < 0.0 {
                Shape::Linear
            } else if l / g < 0.0 && a / g > 0.0 && mu <= 1.0 {
                Shape::Convex
            } else if l / g < 0.0 && a / g < 0.0 && mu >= 1.0 {
                Shape::Concave
            } else {
                Shape::Other
            }
        };
        let loss_shape = {
            let (b, g, l, mu, n) = (self.beta, self.gamma2, self.lambda2, self.mu2, self.n);
            if n <= 0.0 {
                Shape::Other
            } else if g > 0.0 && g < eps_limit && b > 0.0 && l * mu < 0.0 {
                Shape::Constant
            } else if b.abs() < eps_limit && l / g < 0.0 {
                Shape::Linear
            } else if l / g < 0.0 && b / g > 0.0 && mu >= 1.0 {
                Shape::Convex
            } else if l / g < 0.0 && b / g < 0.0 && mu <= 1.0 {
                Shape::Concave
            } else {
                Shape::Other
            }
        };
        ShapeClass { gain_shape, loss_shape }
    }

    /// `α/γ1`, the exponent rate of the gain branch.
    pub fn gain_rate(&self) -> f64 {
        self.alpha / self.gamma1
    }

    /// `β/γ2`, the exponent rate of the loss branch.
    pub fn loss_rate(&self) -> f64 {
        self.beta / self.gamma2
    }

    pub fn utility(&self, x: f64) -> Result<f64, CptError> {
        if x >= self.x0 {
            self.gain().value(x)
        } else {
            self.loss().value(x)
        }
    }

    /// Limit of the loss branch as `x → x0⁻`.
    pub fn loss_limit_at_reference(&self) -> f64 {
        self.loss().anchor()
    }

    /// Value at the reference point (the gain branch).
    pub fn reference_value(&self) -> f64 {
        self.gain().anchor()
    }

    /// `u'(x0⁺)`.
    pub fn gain_slope_at_reference(&self) -> f64 {
        self.gain().slope_at_anchor()
    }

    /// `u'(x0⁻)`.
    pub fn loss_slope_at_reference(&self) -> f64 {
        self.loss().slope_at_anchor()
    }

    /// Analytic derivative. At `x0` the right side is the gain branch and the
    /// left side the loss branch; `TwoSided` there is an error.
    pub fn derivative(&self, x: f64, side: Side) -> Result<f64, CptError> {
        if x == self.x0 {
            return match side {
                Side::Right => Ok(self.gain_slope_at_reference()),
                Side::Left => Ok(self.loss_slope_at_reference()),
                Side::TwoSided => Err(CptError::KinkAt(self.x0)),
            };
        }
        if x > self.x0 {
            self.gain().slope(x)
        } else {
            self.loss().slope(x)
        }
    }

    /// Second derivative of the active branch (gain branch at `x0`).
    pub fn second_derivative(&self, x: f64) -> Result<f64, CptError> {
        if x >= self.x0 {
            self.gain().second(x)
        } else {
            self.loss().second(x)
        }
    }

    /// Splits `u = U + R` into a part `U` that is differentiable at `x0` and
    /// a convex hinge `R` carrying the whole slope drop.
    pub fn decompose(&self, x: f64) -> Result<(f64, f64), CptError> {
        let u = self.utility(x)?;
        if x < self.x0 {
            return Ok((u, 0.0));
        }
        let jump = self.loss_slope_at_reference() - self.gain_slope_at_reference();
        let hinge = jump * (x - self.x0);
        Ok((u + hinge, -hinge))
    }

    /// Derivative of the smooth part `U` of [`CptParams::decompose`].
    pub fn smooth_part_derivative(&self, x: f64, side: Side) -> Result<f64, CptError> {
        let jump = self.loss_slope_at_reference() - self.gain_slope_at_reference();
        let d = self.derivative(x, side)?;
        let on_gain = x > self.x0 || (x == self.x0 && side == Side::Right);
        Ok(if on_gain { d + jump } else { d })
    }
}

/// Probability weighting function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Pwf {
    #[default]
    Identity,
    /// `p^δ / (p^δ + (1 − p)^δ)^{1/δ}`.
    TverskyKahneman { delta: f64 },
}

impl Pwf {
    pub const DEFAULT_DELTA: f64 = 0.65;

    pub fn tversky_kahneman() -> Self {
        Pwf::TverskyKahneman { delta: Self::DEFAULT_DELTA }
    }

    pub fn validate(&self) -> Result<(), CptError> {
        match *self {
            Pwf::Identity => Ok(()),
            Pwf::TverskyKahneman { delta } if delta > 0.0 && delta <= 1.0 => Ok(()),
            Pwf::TverskyKahneman { .. } => Err(invalid("delta", "must lie in (0, 1]")),
        }
    }

    pub fn apply(&self, prob: f64) -> Result<f64, CptError> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(CptError::ProbOutOfRange(prob));
        }
        Ok(match *self {
            Pwf::Identity => prob,
            Pwf::TverskyKahneman { delta } => {
                if prob == 0.0 || prob == 1.0 {
                    prob
                } else {
                    let a = prob.powf(delta);
                    let b = (1.0 - prob).powf(delta);
                    a / (a + b).powf(1.0 / delta)
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, gamma1: f64, lambda1: f64, beta: f64, gamma2: f64, lambda2: f64) -> CptParams {
        CptParams { alpha, beta, lambda1, lambda2, gamma1, gamma2, mu1: 1.0, mu2: 1.0, m: 1.0, n: 1.0, x0: 0.0 }
    }

    fn base() -> CptParams {
        params(1.0, -1.0, 1.0, 1.0, -1.0, 1.0)
    }

    #[test]
    fn validate_accepts_plain_params() {
        assert_eq!(base().validate(), Ok(()));
    }

    #[test]
    fn validate_rejects_zero_gamma() {
        let p = CptParams { gamma1: 0.0, ..base() };
        assert!(matches!(p.validate(), Err(CptError::InvalidParams { field: "gamma1", .. })));
    }

    #[test]
    fn validate_rejects_negative_scale() {
        let p = CptParams { m: -1.0, ..base() };
        assert!(matches!(p.validate(), Err(CptError::InvalidParams { field: "m", .. })));
    }

    #[test]
    fn validate_rejects_linear_limit_with_offset() {
        let p = CptParams { alpha: 0.0, mu1: 1.2, ..base() };
        assert!(matches!(p.validate(), Err(CptError::InvalidParams { field: "mu1", .. })));
    }

    #[test]
    fn utility_is_zero_at_reference() {
        let p = CptParams { x0: 3.0, ..base() };
        assert_eq!(p.utility(3.0).unwrap(), 0.0);
    }

    #[test]
    fn utility_gain_hand_value() {
        let v = base().utility(1.0).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((v - 0.63212).abs() < 1e-5);
    }

    #[test]
    fn utility_linear_limit() {
        let p = params(0.0, 1.0, -1.0, 1.0, -1.0, 1.0);
        assert_eq!(p.utility(2.0).unwrap(), 2.0);
        let near = CptParams { alpha: 1e-12, ..p };
        assert!((near.utility(2.0).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn utility_linear_limit_series_matches_closed_form() {
        let p = params(0.0, 1.0, -1.0, 1.0, -1.0, 1.0);
        for sign in [-1.0, 1.0] {
            let alpha = sign * 0.99 * EPS_LIMIT;
            let below = CptParams { alpha, ..p };
            for i in 0..=20 {
                let x = i as f64 * 0.5;
                // λ1(1 − e^{(α/γ1)x})/α with λ1 = −1, γ1 = 1
                let exact = (alpha * x).exp_m1() / alpha;
                let d = below.utility(x).unwrap() - exact;
                assert!(d.abs() < 1e-12 * exact.abs().max(1.0), "x={x} d={d}");
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let p = params(-1.0, -1.0e-4, 1.0, 1.0, -1.0, 1.0);
        // exponent (α/γ1)·x = 1e4·x
        assert!(matches!(p.utility(2.0), Err(CptError::Overflow { .. })));
        assert!(p.utility(0.05).unwrap().is_finite());
    }

    #[test]
    fn derivative_one_sided_at_reference() {
        let p = base();
        assert_eq!(p.derivative(0.0, Side::Right).unwrap(), 1.0);
        let loss = CptParams { lambda2: 2.25, ..p };
        assert_eq!(loss.derivative(0.0, Side::Left).unwrap(), 2.25);
        assert_eq!(p.derivative(0.0, Side::TwoSided), Err(CptError::KinkAt(0.0)));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let p = CptParams { lambda2: 2.25, m: 2.0, n: 1.5, x0: 1.0, ..base() };
        let x = p.x0 + 5.0;
        let h = 1e-6;
        let fd = (p.utility(x + h).unwrap() - p.utility(x - h).unwrap()) / (2.0 * h);
        let an = p.derivative(x, Side::TwoSided).unwrap();
        assert!(((fd - an) / an).abs() < 1e-5);
    }

    #[test]
    fn decomposition_examples() {
        let p = CptParams { lambda2: 2.25, ..base() };
        assert_eq!(p.decompose(-1.0).unwrap(), (p.utility(-1.0).unwrap(), 0.0));
        assert_eq!(p.decompose(0.0).unwrap(), (0.0, 0.0));
        let (u_part, r_part) = p.decompose(2.0).unwrap();
        assert!((r_part + 2.5).abs() < 1e-15);
        assert!((u_part - (p.utility(2.0).unwrap() + 2.5)).abs() < 1e-15);
    }

    #[test]
    fn shape_rows() {
        assert_eq!(base().classify_shape().gain_shape, Shape::Concave);
        let linear = params(1e-10, 1.0, -1.0, 1.0, -1.0, 1.0);
        assert_eq!(linear.classify_shape().gain_shape, Shape::Linear);
        let constant_loss = CptParams { beta: 1.0, gamma2: 1e-9, lambda2: -1.0, ..base() };
        assert_eq!(constant_loss.classify_shape().loss_shape, Shape::Constant);
        let other = CptParams { lambda1: -1.0, ..base() };
        assert_eq!(other.classify_shape().gain_shape, Shape::Other);
    }

    #[test]
    fn pwf_values() {
        assert_eq!(Pwf::Identity.apply(0.3).unwrap(), 0.3);
        let tk = Pwf::tversky_kahneman();
        assert_eq!(tk.apply(1.0).unwrap(), 1.0);
        assert_eq!(tk.apply(0.0).unwrap(), 0.0);
        let p: f64 = 0.01;
        let a = p.powf(0.65);
        let expected = a / (a + 0.99f64.powf(0.65)).powf(1.0 / 0.65);
        let got = tk.apply(p).unwrap();
        assert_eq!(got, expected);
        assert!(got > 0.01);
        assert_eq!(tk.apply(1.5), Err(CptError::ProbOutOfRange(1.5)));
    }
}
