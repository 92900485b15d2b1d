//! Closed-loop vector fields of the nonlinear damping controller and its
//! linear PD baseline.
//!
//! All fields act on two-dimensional (position-like, velocity-like)
//! coordinates. The set-point field works on plant coordinates `(x1, x2)`,
//! the tracking field on error coordinates `(e1, e2) = (x1 - r, x2 - ṙ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::Mat2;

/// Gains of the nonlinear damping controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    /// Proportional gain, 1/s².
    pub k: f64,
    /// Regularization added to `|e1|` in the damping denominator.
    pub mu: f64,
    /// Optional bound on the control acceleration.
    pub sat: Option<f64>,
}

impl GainParams {
    pub fn new(k: f64, mu: f64) -> Result<Self> {
        Self::with_saturation(k, mu, None)
    }

    pub fn with_saturation(k: f64, mu: f64, sat: Option<f64>) -> Result<Self> {
        let p = Self { k, mu, sat };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::InvalidParams(format!(
                "k must be positive, got {}",
                self.k
            )));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "mu must be non-negative, got {}",
                self.mu
            )));
        }
        if let Some(s) = self.sat {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "sat must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// True when the damping denominator can reach zero.
    pub fn is_singular_capable(&self) -> bool {
        self.mu == 0.0
    }

    fn clamp(&self, u: f64) -> f64 {
        match self.sat {
            Some(s) => u.clamp(-s, s),
            None => u,
        }
    }
}

/// Gains of the linear proportional-derivative baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl PdGains {
    pub fn new(kp: f64, kd: f64) -> Result<Self> {
        if !(kp.is_finite() && kp >= 0.0 && kd.is_finite() && kd >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "PD gains must be finite and non-negative, got kp = {kp}, kd = {kd}"
            )));
        }
        Ok(Self { kp, kd })
    }

    /// `kd = 2√kp`, a double closed-loop pole at `-√kp`.
    pub fn critically_damped(kp: f64) -> Result<Self> {
        Self::new(kp, 2.0 * kp.sqrt())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub x1: f64,
    pub x2: f64,
}

impl PlantState {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn norm(&self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorState {
    pub e1: f64,
    pub e2: f64,
}

impl ErrorState {
    pub const ORIGIN: ErrorState = ErrorState::new(0.0, 0.0);

    pub const fn new(e1: f64, e2: f64) -> Self {
        Self { e1, e2 }
    }

    pub fn norm(&self) -> f64 {
        self.e1.hypot(self.e2)
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.e1, self.e2]
    }
}

impl std::ops::Neg for ErrorState {
    type Output = ErrorState;

    fn neg(self) -> ErrorState {
        ErrorState::new(-self.e1, -self.e2)
    }
}

/// Time derivative of a two-dimensional state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Deriv2 {
    pub d1: f64,
    pub d2: f64,
}

impl Deriv2 {
    pub const fn new(d1: f64, d2: f64) -> Self {
        Self { d1, d2 }
    }
}

/// Sign with `signum(0) = 0`.
///
/// Unlike [`f64::signum`], zero (of either sign) maps to zero.
pub fn signum(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `|v|·v / (|w| + mu)`, zero whenever `v = 0`.
fn damping_term(w: f64, v: f64, mu: f64) -> Result<f64> {
    if v == 0.0 {
        return Ok(0.0);
    }
    let denom = w.abs() + mu;
    if denom == 0.0 {
        return Err(Error::SingularInput { e1: w, e2: v });
    }
    Ok(v.abs() * v / denom)
}

/// Set-point closed loop: `ẋ1 = x2`, `ẋ2 = -k x1 - x2² sign(x2) / (|x1| + mu)`.
pub fn rhs_setpoint(s: PlantState, p: &GainParams) -> Result<Deriv2> {
    let damping = if s.x2 == 0.0 {
        0.0
    } else {
        let denom = s.x1.abs() + p.mu;
        if denom == 0.0 {
            return Err(Error::SingularInput { e1: s.x1, e2: s.x2 });
        }
        s.x2 * s.x2 * f64::from(signum(s.x2)) / denom
    };
    Ok(Deriv2::new(s.x2, p.clamp(-p.k * s.x1 - damping)))
}

/// Tracking error dynamics with steady reference:
/// `ė1 = e2`, `ė2 = -k e1 - |e2| e2 / (|e1| + mu)`.
pub fn rhs_tracking(e: ErrorState, p: &GainParams) -> Result<Deriv2> {
    Ok(Deriv2::new(e.e2, p.clamp(control_accel(e, p)?)))
}

/// Unclamped control acceleration of the tracking controller.
pub fn control_accel(e: ErrorState, p: &GainParams) -> Result<f64> {
    Ok(-p.k * e.e1 - damping_term(e.e1, e.e2, p.mu)?)
}

/// Linear error dynamics `ė1 = e2`, `ė2 = -kp e1 - kd e2`.
pub fn rhs_pd(e: ErrorState, kp: f64, kd: f64) -> Deriv2 {
    Deriv2::new(e.e2, -kp * e.e1 - kd * e.e2)
}

/// Analytic Jacobian of [`rhs_tracking`] (without the saturation clamp).
pub fn jacobian_tracking(e: ErrorState, p: &GainParams) -> Result<Mat2> {
    let denom = e.e1.abs() + p.mu;
    if denom == 0.0 {
        return Err(Error::SingularInput { e1: e.e1, e2: e.e2 });
    }
    let a21 = -p.k + e.e2.abs() * e.e2 * f64::from(signum(e.e1)) / (denom * denom);
    let a22 = -2.0 * e.e2.abs() / denom;
    Ok(Mat2::new(0.0, 1.0, a21, a22))
}

/// The three closed loops that can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum System {
    Setpoint(GainParams),
    Tracking(GainParams),
    Pd(PdGains),
}

impl System {
    pub fn validate(&self) -> Result<()> {
        match self {
            System::Setpoint(p) | System::Tracking(p) => p.validate(),
            System::Pd(g) => PdGains::new(g.kp, g.kd).map(|_| ()),
        }
    }

    /// Control acceleration applied to the double integrator, saturation included.
    pub fn control(&self, e: ErrorState) -> Result<f64> {
        match self {
            System::Setpoint(p) => Ok(rhs_setpoint(PlantState::new(e.e1, e.e2), p)?.d2),
            System::Tracking(p) => Ok(rhs_tracking(e, p)?.d2),
            System::Pd(g) => Ok(rhs_pd(e, g.kp, g.kd).d2),
        }
    }

    /// Stiffness of the quadratic energy `½ k e1² + ½ e2²`.
    pub fn energy_gain(&self) -> f64 {
        match self {
            System::Setpoint(p) | System::Tracking(p) => p.k,
            System::Pd(g) => g.kp,
        }
    }

    /// Energy rate of the unsaturated, steady-reference closed loop.
    pub fn nominal_energy_rate(&self, e: ErrorState) -> Result<f64> {
        match self {
            System::Setpoint(p) | System::Tracking(p) => {
                if e.e2 == 0.0 {
                    return Ok(0.0);
                }
                let denom = e.e1.abs() + p.mu;
                if denom == 0.0 {
                    return Err(Error::SingularInput { e1: e.e1, e2: e.e2 });
                }
                Ok(-e.e2.abs() * e.e2 * e.e2 / denom)
            }
            System::Pd(g) => Ok(-g.kd * e.e2 * e.e2),
        }
    }

    /// Unclamped control law of the nonlinear loops, or the PD law.
    pub fn nominal_control(&self, e: ErrorState) -> Result<f64> {
        match self {
            System::Setpoint(p) | System::Tracking(p) => control_accel(e, p),
            System::Pd(g) => Ok(rhs_pd(e, g.kp, g.kd).d2),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::Setpoint(_) => "setpoint",
            System::Tracking(_) => "tracking",
            System::Pd(_) => "pd",
        }
    }
}
