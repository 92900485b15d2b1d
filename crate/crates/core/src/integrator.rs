//! Fixed-step RK4 integration of the closed loops around a double-integrator
//! plant, with convergence, divergence and singularity stops.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ErrorState, PlantState, System};
use crate::reference::{NoiseChannel, NoiseConfig, RefProfile, RefSample};
use crate::series::{Sample, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Error norm below which a sample counts as converged.
    pub conv_eps: f64,
    /// How long the error must stay below `conv_eps`.
    pub conv_hold: f64,
    /// Plant state norm above which the run is declared diverged.
    pub blowup_bound: f64,
    /// End the run as soon as convergence is confirmed.
    pub stop_on_convergence: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_end: 5.0,
            conv_eps: 1e-6,
            conv_hold: 0.05,
            blowup_bound: 1e6,
            stop_on_convergence: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("conv_eps", self.conv_eps)?;
        positive("blowup_bound", self.blowup_bound)?;
        if !(self.conv_hold.is_finite() && self.conv_hold >= 0.0) {
            return Err(Error::InvalidConfig(
                "conv_hold must be non-negative".into(),
            ));
        }
        if self.dt >= self.t_end {
            return Err(Error::InvalidConfig(format!(
                "dt ({}) must be smaller than t_end ({})",
                self.dt, self.t_end
            )));
        }
        if self.blowup_bound <= self.conv_eps {
            return Err(Error::InvalidConfig(
                "blowup_bound must exceed conv_eps".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps after the first sample.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Number of grid intervals covered by `conv_hold`.
    pub fn hold_steps(&self) -> usize {
        hold_steps(self.conv_hold, self.dt)
    }
}

fn hold_steps(hold: f64, dt: f64) -> usize {
    (hold / dt - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Completed,
    Converged,
    Diverged,
    Singular,
}

impl Termination {
    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::Diverged | Termination::Singular)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Converged => "converged",
            Termination::Diverged => "diverged",
            Termination::Singular => "singular",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub series: TimeSeries,
    /// Time at which the convergence hold was confirmed (entry time + hold).
    pub converged_at: Option<f64>,
    pub terminated: Termination,
}

/// One classical Runge–Kutta step of `ṡ = field(t, s)`.
pub fn rk4_step<F>(mut field: F, t: f64, s: [f64; 2], dt: f64) -> Result<[f64; 2]>
where
    F: FnMut(f64, [f64; 2]) -> Result<[f64; 2]>,
{
    let half = 0.5 * dt;
    let shift = |s: [f64; 2], d: [f64; 2], h: f64| [s[0] + h * d[0], s[1] + h * d[1]];
    let k1 = field(t, s)?;
    let k2 = field(t + half, shift(s, k1, half))?;
    let k3 = field(t + half, shift(s, k2, half))?;
    let k4 = field(t + dt, shift(s, k3, dt))?;
    let sixth = dt / 6.0;
    Ok([
        s[0] + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ])
}

fn error_of(x: [f64; 2], r: &RefSample) -> ErrorState {
    ErrorState::new(x[0] - r.r, x[1] - r.rdot)
}

fn record(system: &System, x: [f64; 2], r: &RefSample, u: f64) -> Sample {
    let e = error_of(x, r);
    let k = system.energy_gain();
    // split into the nominal rate plus the part caused by saturation, noise
    // and reference acceleration; exact when the nominal law was applied
    let vdot = match (system.nominal_energy_rate(e), system.nominal_control(e)) {
        (Ok(rate), Ok(nominal)) => rate + e.e2 * (u - nominal - r.rddot),
        _ => k * e.e1 * e.e2 + e.e2 * (u - r.rddot),
    };
    Sample {
        t: 0.0,
        x1: x[0],
        x2: x[1],
        r: r.r,
        rdot: r.rdot,
        e1: e.e1,
        e2: e.e2,
        u,
        v: 0.5 * k * e.e1 * e.e1 + 0.5 * e.e2 * e.e2,
        vdot,
    }
}

/// Integrates `system` around the double integrator `ẍ1 = u` from `init`.
///
/// The controller sees `x - ref` (plus held measurement noise when `noise`
/// is given); the stored states are always the true ones. Noise offsets are
/// held over each integration step. Singular or diverging runs are reported
/// through [`SimOutcome::terminated`]; only invalid configurations error.
pub fn simulate(
    system: &System,
    init: PlantState,
    reference: &RefProfile,
    noise: Option<&NoiseConfig>,
    cfg: &IntegratorConfig,
) -> Result<SimOutcome> {
    cfg.validate()?;
    system.validate()?;
    if let Some(n) = noise {
        n.validate()?;
        if n.sample_dt < cfg.dt {
            return Err(Error::InvalidConfig(format!(
                "noise sample_dt ({}) is shorter than dt ({})",
                n.sample_dt, cfg.dt
            )));
        }
    }
    if !init.is_finite() {
        return Err(Error::InvalidConfig("initial state must be finite".into()));
    }
    let steps = cfg.steps();
    let horizon = steps as f64 * cfg.dt;
    reference.eval(horizon).map_err(|_| {
        Error::InvalidConfig(format!(
            "reference ends at {} s, before the integration horizon {horizon} s",
            reference.t_end()
        ))
    })?;

    let mut channel = noise.map(|n| NoiseChannel::new(*n));
    let mut series = TimeSeries::new(0.0, cfg.dt);
    let hold = cfg.hold_steps();
    let mut below = 0usize;
    let mut converged_at = None;
    let mut x = [init.x1, init.x2];
    let mut terminated = Termination::Completed;

    for i in 0..=steps {
        let t = i as f64 * cfg.dt;
        let offsets = channel.as_mut().map_or((0.0, 0.0), |c| c.offsets(t));
        let control = |t: f64, s: [f64; 2]| -> Result<f64> {
            let r = reference.eval(t)?;
            system.control(error_of([s[0] + offsets.0, s[1] + offsets.1], &r))
        };

        let r = reference.eval(t)?;
        let Ok(u) = control(t, x) else {
            terminated = Termination::Singular;
            break;
        };
        let sample = record(system, x, &r, u);
        let err_norm = sample.error().norm();
        series.push(sample);

        if err_norm < cfg.conv_eps {
            below += 1;
            if below == hold + 1 && converged_at.is_none() {
                converged_at = Some(t);
                if cfg.stop_on_convergence {
                    terminated = Termination::Converged;
                    break;
                }
            }
        } else {
            below = 0;
        }
        if i == steps {
            break;
        }

        let next = rk4_step(|t, s| Ok([s[1], control(t, s)?]), t, x, cfg.dt);
        match next {
            Ok(n) => {
                let state = PlantState::new(n[0], n[1]);
                if !state.is_finite() || state.norm() > cfg.blowup_bound {
                    terminated = Termination::Diverged;
                    break;
                }
                x = n;
            }
            Err(Error::SingularInput { .. }) => {
                terminated = Termination::Singular;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    if terminated == Termination::Completed && converged_at.is_some() {
        terminated = Termination::Converged;
    }
    Ok(SimOutcome {
        series,
        converged_at,
        terminated,
    })
}

/// Earliest grid time from which the error norm stays below `eps` for
/// `hold` seconds, with the whole hold window inside the series.
pub fn detect_convergence(ts: &TimeSeries, eps: f64, hold: f64) -> Option<f64> {
    let need = hold_steps(hold, ts.dt()) + 1;
    let mut run = 0usize;
    for (i, s) in ts.iter().enumerate() {
        if s.error().norm() < eps {
            run += 1;
            if run == need {
                return Some(ts.time(i + 1 - need));
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Largest state discrepancy between runs at `cfg.dt` and at `fine_dt`,
/// compared on the coarse grid over the common horizon.
pub fn step_discrepancy(
    system: &System,
    init: PlantState,
    reference: &RefProfile,
    noise: Option<&NoiseConfig>,
    cfg: &IntegratorConfig,
    fine_dt: f64,
) -> Result<f64> {
    let ratio = (cfg.dt / fine_dt).round();
    if !(ratio >= 1.0) || (ratio * fine_dt - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(Error::InvalidConfig(format!(
            "fine step {fine_dt} must divide dt {}",
            cfg.dt
        )));
    }
    let ratio = ratio as usize;
    let coarse = simulate(system, init, reference, noise, cfg)?;
    let fine_cfg = IntegratorConfig {
        dt: fine_dt,
        ..*cfg
    };
    let fine = simulate(system, init, reference, noise, &fine_cfg)?;
    let fine = fine.series.samples();
    Ok(coarse
        .series
        .iter()
        .enumerate()
        .map_while(|(i, c)| {
            fine.get(i * ratio)
                .map(|f| (c.x1 - f.x1).hypot(c.x2 - f.x2))
        })
        .fold(0.0, f64::max))
}

/// Step-halving self check: [`step_discrepancy`] against `dt / 2`.
pub fn verify_step(
    system: &System,
    init: PlantState,
    reference: &RefProfile,
    noise: Option<&NoiseConfig>,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    step_discrepancy(system, init, reference, noise, cfg, 0.5 * cfg.dt)
}
