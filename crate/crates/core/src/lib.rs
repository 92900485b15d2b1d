//! Simulation and convergence certification for the optimal nonlinear
//! damping controller of second-order systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the closed-loop vector fields and their Jacobian,
//! * [`reference`] builds C¹ reference trajectories and measurement noise,
//! * [`integrator`] runs fixed-step RK4 simulations,
//! * [`certify`] turns fields and trajectories into convergence evidence.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod certify;
pub mod error;
pub mod integrator;
pub mod mat2;
pub mod model;
pub mod reference;
pub mod series;

pub use error::{Error, Result};
pub use integrator::{
    detect_convergence, rk4_step, simulate, step_discrepancy, verify_step, IntegratorConfig,
    SimOutcome, Termination,
};
pub use mat2::Mat2;
pub use model::{
    control_accel, jacobian_tracking, rhs_pd, rhs_setpoint, rhs_tracking, signum, Deriv2,
    ErrorState, GainParams, PdGains, PlantState, System,
};
pub use reference::{
    eval_ref, make_constant, make_slope, make_trapezoid, noisy_measurement, NoiseChannel,
    NoiseConfig, RefProfile, RefSample, Segment,
};
pub use series::{Sample, TimeSeries, CSV_HEADER};
