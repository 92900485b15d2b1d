//! Numeric convergence evidence for the tracking error dynamics.
//!
//! Pointwise quantities ([`demidovich_j`], [`quadform_along_state`],
//! [`lyapunov_v`], ...) live here; grid sweeps are in [`grid`] and
//! trajectory-based estimators in [`trajectory`].

pub mod grid;
pub mod trajectory;

use serde::{Deserialize, Serialize};

pub use grid::{
    energy_rate_grid, grid_certificate, Axis, Certificate, CertificateSummary, EnergyRateGrid,
    GridSpec, PointRecord,
};
pub use trajectory::{
    attractor_slope, contraction_estimate, k_scaling_check, logscale_fit, logscale_fit_from,
    ContractionReport, LogScaleFit,
};

use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::model::{jacobian_tracking, ErrorState, GainParams};

/// Coefficient of the closed-form along-state rate obtained by expanding
/// `eᵀ J e` with the energy weight and the analytic Jacobian.
pub const RATE_COEFFICIENT_HALF: f64 = 0.5;
/// Alternative coefficient for the same closed form, kept for comparison.
pub const RATE_COEFFICIENT_THREE_QUARTERS: f64 = 0.75;

/// Symmetric positive definite weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PMatrix(Mat2);

impl PMatrix {
    pub fn new(m: Mat2) -> Result<Self> {
        if !m.is_finite() || !m.is_symmetric() {
            return Err(Error::InvalidParams(format!(
                "P must be finite and symmetric: {m:?}"
            )));
        }
        let (lo, _) = m.sym_eigenvalues();
        if !(lo > 0.0) {
            return Err(Error::InvalidParams(format!(
                "P must be positive definite: {m:?}"
            )));
        }
        Ok(Self(m))
    }

    /// `½·diag(k, 1)`, whose quadratic form is the closed-loop energy.
    pub fn energy(k: f64) -> Result<Self> {
        Self::new(Mat2::diag(0.5 * k, 0.5))
    }

    pub fn matrix(&self) -> Mat2 {
        self.0
    }
}

/// `½ (P A + Aᵀ P)` with `A` the tracking Jacobian at `e`.
pub fn demidovich_j(e: ErrorState, p: &GainParams, weight: &PMatrix) -> Result<Mat2> {
    let a = jacobian_tracking(e, p)?;
    let pm = weight.matrix();
    Ok((pm * a + a.transpose() * pm).scale(0.5))
}

/// `eᵀ J(e) e`.
pub fn quadform_along_state(e: ErrorState, p: &GainParams, weight: &PMatrix) -> Result<f64> {
    Ok(demidovich_j(e, p, weight)?.quadratic_form(e.as_array()))
}

/// `-c·|e2|·e2²·(|e1| + 2μ) / (|e1| + μ)²`.
pub fn closed_form_rate(e: ErrorState, p: &GainParams, c: f64) -> Result<f64> {
    let denom = e.e1.abs() + p.mu;
    if denom == 0.0 {
        return Err(Error::SingularInput { e1: e.e1, e2: e.e2 });
    }
    Ok(-c * e.e2.abs() * e.e2 * e.e2 * (e.e1.abs() + 2.0 * p.mu) / (denom * denom))
}

/// `½ k e1² + ½ e2²`.
pub fn lyapunov_v(e: ErrorState, p: &GainParams) -> f64 {
    0.5 * p.k * e.e1 * e.e1 + 0.5 * e.e2 * e.e2
}

/// `-|e2|·e2² / (|e1| + μ)`.
pub fn lyapunov_vdot(e: ErrorState, p: &GainParams) -> Result<f64> {
    let denom = e.e1.abs() + p.mu;
    if denom == 0.0 {
        return Err(Error::SingularInput { e1: e.e1, e2: e.e2 });
    }
    Ok(-e.e2.abs() * e.e2 * e.e2 / denom)
}

/// Relative deviation `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gains(k: f64, mu: f64) -> GainParams {
        GainParams::new(k, mu).unwrap()
    }

    fn energy(k: f64) -> PMatrix {
        PMatrix::energy(k).unwrap()
    }

    #[test]
    fn pmatrix_validation() {
        assert!(PMatrix::new(Mat2::new(1.0, 0.1, 0.2, 1.0)).is_err());
        assert!(PMatrix::new(Mat2::diag(1.0, -1.0)).is_err());
        assert_eq!(energy(100.0).matrix(), Mat2::diag(50.0, 0.5));
    }

    #[test]
    fn demidovich_examples() {
        let j = demidovich_j(
            ErrorState::new(1.0, 0.0),
            &gains(100.0, 1e-4),
            &energy(100.0),
        )
        .unwrap();
        assert_eq!(j, Mat2::ZERO);
        let j = demidovich_j(
            ErrorState::new(1.0, 1.0),
            &gains(100.0, 0.0),
            &energy(100.0),
        )
        .unwrap();
        assert_eq!(j, Mat2::new(0.0, 0.25, 0.25, -1.0));
    }

    #[test]
    fn demidovich_against_finite_difference_jacobian() {
        // numeric Jacobian of the field, pushed through the same formula
        let p = gains(100.0, 0.0);
        let e = ErrorState::new(1.0, 1.0);
        let h = 1e-6;
        let f = |e1: f64, e2: f64| crate::model::rhs_tracking(ErrorState::new(e1, e2), &p).unwrap();
        let a = Mat2::new(
            (f(e.e1 + h, e.e2).d1 - f(e.e1 - h, e.e2).d1) / (2.0 * h),
            (f(e.e1, e.e2 + h).d1 - f(e.e1, e.e2 - h).d1) / (2.0 * h),
            (f(e.e1 + h, e.e2).d2 - f(e.e1 - h, e.e2).d2) / (2.0 * h),
            (f(e.e1, e.e2 + h).d2 - f(e.e1, e.e2 - h).d2) / (2.0 * h),
        );
        let pm = energy(100.0).matrix();
        let numeric = (pm * a + a.transpose() * pm).scale(0.5);
        let j = demidovich_j(e, &p, &energy(100.0)).unwrap();
        for (x, y) in [
            (j.a11, numeric.a11),
            (j.a12, numeric.a12),
            (j.a21, numeric.a21),
            (j.a22, numeric.a22),
        ] {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn quadform_examples() {
        let p = gains(100.0, 1e-4);
        for e1 in [-3.0, -1e-3, 0.5, 2.0] {
            assert_eq!(
                quadform_along_state(ErrorState::new(e1, 0.0), &p, &energy(100.0)).unwrap(),
                0.0
            );
        }
        let q = quadform_along_state(
            ErrorState::new(1.0, 1.0),
            &gains(100.0, 0.0),
            &energy(100.0),
        )
        .unwrap();
        assert_eq!(q, -0.5);
        let q = quadform_along_state(ErrorState::new(0.0, 1.0), &p, &energy(100.0)).unwrap();
        assert_relative_eq!(q, -10_000.0, max_relative = 1e-10);
    }

    #[test]
    fn closed_form_examples() {
        let p0 = gains(100.0, 0.0);
        assert_eq!(
            closed_form_rate(ErrorState::new(3.0, 0.0), &p0, 0.75).unwrap(),
            0.0
        );
        assert_eq!(
            closed_form_rate(ErrorState::new(1.0, 1.0), &p0, 0.75).unwrap(),
            -0.75
        );
        assert_eq!(
            closed_form_rate(ErrorState::new(1.0, 1.0), &p0, 0.5).unwrap(),
            -0.5
        );
        assert!(closed_form_rate(ErrorState::new(0.0, 1.0), &p0, 0.5).is_err());
    }

    #[test]
    fn lyapunov_examples() {
        let p = gains(100.0, 1e-4);
        assert_eq!(lyapunov_v(ErrorState::ORIGIN, &p), 0.0);
        assert_eq!(lyapunov_v(ErrorState::new(1.0, 0.0), &p), 50.0);
        assert_eq!(lyapunov_v(ErrorState::new(1.0, 2.0), &p), 52.0);
        assert_eq!(
            lyapunov_vdot(ErrorState::new(1.0, 1.0), &gains(100.0, 0.0)).unwrap(),
            -1.0
        );
        assert_eq!(lyapunov_vdot(ErrorState::new(0.7, 0.0), &p).unwrap(), 0.0);
        assert_relative_eq!(
            lyapunov_vdot(ErrorState::new(0.0, 2.0), &p).unwrap(),
            -80_000.0,
            max_relative = 1e-12
        );
        assert!(lyapunov_vdot(ErrorState::new(0.0, 2.0), &gains(100.0, 0.0)).is_err());
    }

    #[test]
    fn repulsion_from_zero_rate() {
        let p = gains(100.0, 1e-4);
        for e1 in [-2.0, -1e-6, 1e-6, 0.3] {
            let d = crate::model::rhs_tracking(ErrorState::new(e1, 0.0), &p).unwrap();
            assert_eq!(d.d2, -100.0 * e1);
            assert_ne!(d.d2, 0.0);
        }
    }

    fn signed(mag: f64, neg: bool) -> f64 {
        if neg {
            -mag
        } else {
            mag
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn quadform_matches_half_coefficient(
            m1 in 1e-3f64..10.0, n1: bool,
            m2 in 1e-3f64..10.0, n2: bool,
            k in prop_oneof![Just(1.0), Just(100.0)],
            mu in prop_oneof![Just(0.0), Just(1e-4)],
        ) {
            let e = ErrorState::new(signed(m1, n1), signed(m2, n2));
            let p = gains(k, mu);
            let q = quadform_along_state(e, &p, &energy(k)).unwrap();
            let c = closed_form_rate(e, &p, RATE_COEFFICIENT_HALF).unwrap();
            // the (2,1) Jacobian entry cancels -k against +k inside J, which
            // costs up to one ulp of k on the e1·e2 term
            let rounding = 4.0 * f64::EPSILON * k * (e.e1 * e.e2).abs();
            prop_assert!((q - c).abs() <= 1e-10 * q.abs().max(c.abs()) + rounding, "{q} vs {c}");
            prop_assert!(q < 0.0);
        }

        #[test]
        fn energy_is_positive_definite(e1 in -10.0f64..10.0, e2 in -10.0f64..10.0, k in 1e-3f64..1e3) {
            prop_assume!(e1 != 0.0 || e2 != 0.0);
            prop_assert!(lyapunov_v(ErrorState::new(e1, e2), &gains(k, 1e-4)) > 0.0);
        }
    }
}
