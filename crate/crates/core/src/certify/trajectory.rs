//! Estimators that work on simulated trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{simulate, IntegratorConfig, SimOutcome};
use crate::model::{GainParams, PlantState, System};
use crate::reference::make_constant;
use crate::series::TimeSeries;

/// Exponential envelope `d(t) <= alpha · d(t0) · exp(-beta (t - t0))` for the
/// distance between two solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub alpha: f64,
    pub beta: f64,
    /// `max_t d(t) / d(t0)`.
    pub sup_ratio: f64,
    /// RMS residual of the log-linear fit.
    pub fit_residual: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fits the contraction envelope of two runs on the same grid.
///
/// The fit uses samples from `transient_end` until the distance first drops
/// below `100·ε·d(t0)`; `alpha` is the smallest factor for which the fitted
/// envelope bounds every sample up to the end of that window.
pub fn contraction_estimate(
    a: &TimeSeries,
    b: &TimeSeries,
    transient_end: f64,
) -> Result<ContractionReport> {
    if a.dt() != b.dt() || a.t0() != b.t0() {
        return Err(Error::DegenerateInput(
            "series do not share a time grid".into(),
        ));
    }
    let dist: Vec<f64> = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| (p.x1 - q.x1).hypot(p.x2 - q.x2))
        .collect();
    let d0 = *dist
        .first()
        .ok_or_else(|| Error::DegenerateInput("empty series".into()))?;
    if d0 == 0.0 {
        return Err(Error::DegenerateInput("identical initial states".into()));
    }
    let t0 = a.t0();
    let floor = 100.0 * f64::EPSILON * d0;
    let start = dist
        .iter()
        .enumerate()
        .position(|(i, _)| a.time(i) >= t0 + transient_end)
        .ok_or_else(|| Error::DegenerateInput("no samples after the transient".into()))?;
    let end = dist[start..]
        .iter()
        .position(|&d| d < floor)
        .map_or(dist.len(), |p| start + p);

    let (xs, ys): (Vec<f64>, Vec<f64>) =
        (start..end).map(|i| (a.time(i) - t0, dist[i].ln())).unzip();
    if xs.len() < 2 {
        return Err(Error::DegenerateInput(
            "fewer than two samples in the fit window".into(),
        ));
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    let beta = -slope;
    let fit_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    let alpha = (0..end)
        .map(|i| dist[i] / (d0 * (-beta * (a.time(i) - t0)).exp()))
        .fold(0.0, f64::max);
    let sup_ratio = dist.iter().fold(0.0, |m: f64, &d| m.max(d / d0));
    Ok(ContractionReport {
        alpha,
        beta,
        sup_ratio,
        fit_residual,
        window: (a.time(start), a.time(end - 1)),
        samples: xs.len(),
    })
}

/// Least-squares slope of `e2` against `e1` through the origin, using samples
/// with `0 < ‖e‖ < window`.
pub fn attractor_slope(ts: &TimeSeries, window: f64) -> Result<f64> {
    let (mut sxy, mut sxx, mut n) = (0.0, 0.0, 0usize);
    for s in ts.iter() {
        let norm = s.error().norm();
        if norm > 0.0 && norm < window {
            sxy += s.e1 * s.e2;
            sxx += s.e1 * s.e1;
            n += 1;
        }
    }
    if n < 10 || sxx == 0.0 {
        return Err(Error::DegenerateInput(format!(
            "{n} samples inside the window {window}, need at least 10"
        )));
    }
    Ok(sxy / sxx)
}

/// Quadratic fit `log10|e1(t)| ≈ c0 + c1 t + c2 t²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScaleFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// [`logscale_fit_from`] starting at the peak of `|e1|`.
pub fn logscale_fit(ts: &TimeSeries, floor: f64) -> Result<LogScaleFit> {
    let peak = ts
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, s)| {
            if s.e1.abs() > bv {
                (i, s.e1.abs())
            } else {
                (bi, bv)
            }
        })
        .0;
    fit_from_index(ts, floor, peak)
}

/// Fits the decay window that starts at the first sample with `t >= t_from`
/// and ends before `|e1|` first drops to `floor`.
pub fn logscale_fit_from(ts: &TimeSeries, floor: f64, t_from: f64) -> Result<LogScaleFit> {
    let start = ts
        .iter()
        .position(|s| s.t >= t_from)
        .ok_or_else(|| Error::DegenerateInput(format!("series ends before t = {t_from}")))?;
    fit_from_index(ts, floor, start)
}

fn fit_from_index(ts: &TimeSeries, floor: f64, start: usize) -> Result<LogScaleFit> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParams("floor must be positive".into()));
    }
    let (ts_, ys): (Vec<f64>, Vec<f64>) = ts.samples()[start.min(ts.len())..]
        .iter()
        .take_while(|s| s.e1.abs() > floor)
        .map(|s| (s.t, s.e1.abs().log10()))
        .unzip();
    if ts_.len() < 3 {
        return Err(Error::DegenerateInput(
            "decay window has fewer than three samples".into(),
        ));
    }
    let [c0, c1, c2] = quadratic_fit(&ts_, &ys);
    Ok(LogScaleFit {
        c0,
        c1,
        c2,
        window: (ts_[0], ts_[ts_.len() - 1]),
        samples: ts_.len(),
    })
}

/// Checks the time-scaling symmetry of the set-point loop: the run with gain
/// `k` from `(x1, x2)` should equal the gain-1 run from `(x1, x2/√k)` read at
/// `√k·t`, with velocities divided by `√k`.
///
/// Returns `max |x1ₖ(t) - y1(√k t)| + |x2ₖ(t)/√k - y2(√k t)|` over the
/// common horizon, with the gain-1 run linearly interpolated.
pub fn k_scaling_check(p: &GainParams, init: PlantState, dt: f64, t_end: f64) -> Result<f64> {
    p.validate()?;
    let root = p.k.sqrt();
    let unit = GainParams {
        k: 1.0,
        mu: p.mu,
        sat: p.sat.map(|s| s / p.k),
    };
    let run = |gains: GainParams, init: PlantState, t_end: f64| -> Result<SimOutcome> {
        let cfg = IntegratorConfig {
            dt,
            t_end,
            ..IntegratorConfig::default()
        };
        let horizon = t_end.max(cfg.steps() as f64 * dt);
        let out = simulate(
            &System::Setpoint(gains),
            init,
            &make_constant(0.0, horizon)?,
            None,
            &cfg,
        )?;
        if out.terminated.is_failure() {
            return Err(Error::DegenerateInput(format!(
                "set-point run with k = {} ended {}",
                gains.k,
                out.terminated.as_str()
            )));
        }
        Ok(out)
    };
    let scaled = run(*p, init, t_end)?;
    let unit_run = run(unit, PlantState::new(init.x1, init.x2 / root), t_end * root)?;
    let fine = unit_run.series.samples();
    let horizon = unit_run.series.time(fine.len() - 1);

    let mut worst: f64 = 0.0;
    for s in scaled.series.iter() {
        let tau = root * s.t;
        if tau > horizon {
            break;
        }
        let pos = tau / dt;
        let j = (pos.floor() as usize).min(fine.len() - 1);
        let frac = pos - j as f64;
        let (y1, y2) = match fine.get(j + 1) {
            Some(next) => (
                fine[j].x1 + frac * (next.x1 - fine[j].x1),
                fine[j].x2 + frac * (next.x2 - fine[j].x2),
            ),
            None => (fine[j].x1, fine[j].x2),
        };
        worst = worst.max((s.x1 - y1).abs() + (s.x2 / root - y2).abs());
    }
    Ok(worst)
}

/// Ordinary least squares `y ≈ intercept + slope·x`; returns `(slope, intercept)`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Least-squares quadratic `[c0, c1, c2]`, solved in centred and scaled time
/// and mapped back to monomials in `t`.
fn quadratic_fit(ts: &[f64], ys: &[f64]) -> [f64; 3] {
    let n = ts.len() as f64;
    let mid = ts.iter().sum::<f64>() / n;
    let half = ts
        .iter()
        .map(|t| (t - mid).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (t, y) in ts.iter().zip(ys) {
        let s = (t - mid) / half;
        let row = [1.0, s, s * s];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let [a, b, c] = solve3(ata, aty);
    // a + b s + c s² with s = (t - mid) / half
    let (b, c) = (b / half, c / (half * half));
    [a - b * mid + c * mid * mid, b - 2.0 * c * mid, c]
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (a, b) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *a -= f * b;
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - tail) / m[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PdGains;
    use crate::reference::make_slope;
    use crate::series::Sample;
    use approx::assert_relative_eq;

    fn series_from(dt: f64, states: impl IntoIterator<Item = (f64, f64)>) -> TimeSeries {
        TimeSeries::from_samples(
            0.0,
            dt,
            states.into_iter().map(|(e1, e2)| Sample {
                t: 0.0,
                x1: e1,
                x2: e2,
                r: 0.0,
                rdot: 0.0,
                e1,
                e2,
                u: 0.0,
                v: 0.0,
                vdot: 0.0,
            }),
        )
    }

    #[test]
    fn polynomial_fits_recover_exact_data() {
        let ts: Vec<f64> = (0..50).map(|i| 3.0 + 0.1 * i as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 1.5 - 2.0 * t + 0.25 * t * t).collect();
        let [c0, c1, c2] = quadratic_fit(&ts, &ys);
        assert_relative_eq!(c0, 1.5, epsilon = 1e-9);
        assert_relative_eq!(c1, -2.0, epsilon = 1e-9);
        assert_relative_eq!(c2, 0.25, epsilon = 1e-10);
        let (slope, icept) = linear_fit(&ts, &ts.iter().map(|t| 4.0 - t).collect::<Vec<_>>());
        assert_relative_eq!(slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(icept, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn logscale_of_exponential_is_linear() {
        let dt = 1e-3;
        let ts = series_from(dt, (0..5000).map(|i| ((-(i as f64) * dt).exp(), 0.0)));
        let fit = logscale_fit(&ts, 1e-12).unwrap();
        assert!(fit.c2.abs() < 1e-9, "{}", fit.c2);
        assert_relative_eq!(fit.c1, -1.0 / std::f64::consts::LN_10, max_relative = 1e-9);
        assert_relative_eq!(fit.c0, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn logscale_window_errors() {
        let ts = series_from(1e-3, (0..10).map(|_| (1e-15, 0.0)));
        assert!(matches!(
            logscale_fit(&ts, 1e-12),
            Err(Error::DegenerateInput(_))
        ));
        assert!(logscale_fit_from(&ts, 1e-12, 1.0).is_err());
    }

    #[test]
    fn collinear_attractor_slope() {
        let k: f64 = 100.0;
        let ts = series_from(
            1e-3,
            (1..200).map(|i| {
                let e1 = 1e-3 * i as f64;
                (e1, -k.sqrt() * e1)
            }),
        );
        assert_relative_eq!(
            attractor_slope(&ts, 10.0).unwrap(),
            -10.0,
            max_relative = 1e-14
        );
        assert!(attractor_slope(&ts, 1e-2).is_err());
    }

    #[test]
    fn contraction_rejects_identical_starts() {
        let ts = series_from(1e-3, (0..10).map(|i| (i as f64, 0.0)));
        assert!(matches!(
            contraction_estimate(&ts, &ts, 0.0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn contraction_of_pure_exponential() {
        let dt = 1e-3;
        let a = series_from(
            dt,
            (0..2000).map(|i| (2.0 * (-3.0 * i as f64 * dt).exp(), 0.0)),
        );
        let b = series_from(dt, (0..2000).map(|_| (0.0, 0.0)));
        let rep = contraction_estimate(&a, &b, 0.0).unwrap();
        assert_relative_eq!(rep.beta, 3.0, max_relative = 1e-9);
        assert_relative_eq!(rep.alpha, 1.0, max_relative = 1e-9);
        assert_eq!(rep.sup_ratio, 1.0);
        assert!(rep.fit_residual < 1e-9);
    }

    #[test]
    fn contraction_of_pd_pair() {
        let sys = System::Pd(PdGains::new(100.0, 20.0).unwrap());
        let r = make_slope(1.0, 5.0).unwrap();
        let cfg = IntegratorConfig {
            stop_on_convergence: false,
            ..IntegratorConfig::default()
        };
        let a = simulate(&sys, PlantState::new(1.0, 0.0), &r, None, &cfg).unwrap();
        let b = simulate(&sys, PlantState::new(0.5, 50.0), &r, None, &cfg).unwrap();
        let rep = contraction_estimate(&a.series, &b.series, 0.0).unwrap();
        assert!((rep.beta - 10.0).abs() < 2.0, "beta = {}", rep.beta);
        // envelope holds on every sample in the window
        let (ea, eb) = (a.series.samples(), b.series.samples());
        let d0 = (ea[0].x1 - eb[0].x1).hypot(ea[0].x2 - eb[0].x2);
        for (p, q) in ea.iter().zip(eb).take_while(|(p, _)| p.t <= rep.window.1) {
            let d = (p.x1 - q.x1).hypot(p.x2 - q.x2);
            assert!(d <= rep.alpha * d0 * (-rep.beta * p.t).exp() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn k_scaling_identity() {
        let p = GainParams::new(1.0, 0.0).unwrap();
        let dev = k_scaling_check(&p, PlantState::new(1.0, 0.0), 1e-3, 5.0).unwrap();
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn k_scaling_gain_100() {
        let p = GainParams::new(100.0, 0.0).unwrap();
        let dev = k_scaling_check(&p, PlantState::new(1.0, 0.0), 1e-4, 2.0).unwrap();
        assert!(dev < 1e-5, "{dev}");
    }

    #[test]
    fn k_scaling_propagates_singular_runs() {
        let p = GainParams::new(100.0, 0.0).unwrap();
        assert!(k_scaling_check(&p, PlantState::new(0.0, 1.0), 1e-4, 1.0).is_err());
    }
}
