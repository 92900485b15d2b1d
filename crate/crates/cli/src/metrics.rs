//! Per-run summary statistics used by `compare`.

use serde::Serialize;

use nldamp_core::certify::{logscale_fit, logscale_fit_from};
use nldamp_core::{detect_convergence, IntegratorConfig, TimeSeries};

use crate::scenario::MetricsSpec;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunMetrics {
    /// Entry time of the first convergence window, if any.
    pub t_conv: Option<f64>,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub rms_e1: f64,
    pub max_abs_u: f64,
}

pub const METRICS_CSV_HEADER: &str = "label,init,status,t_conv,c0,c1,c2,rms_e1,max_abs_u";

/// RMS of `e1` over samples with `t >= t_last - window`.
pub fn tail_rms_e1(ts: &TimeSeries, window: f64) -> f64 {
    let Some(last) = ts.last() else {
        return f64::NAN;
    };
    let from = last.t - window;
    let (sum, n) = ts
        .iter()
        .filter(|s| s.t >= from - 1e-9)
        .fold((0.0, 0usize), |(acc, n), s| (acc + s.e1 * s.e1, n + 1));
    (sum / n as f64).sqrt()
}

pub fn run_metrics(ts: &TimeSeries, cfg: &IntegratorConfig, m: &MetricsSpec) -> RunMetrics {
    let fit = match m.log_fit_start {
        Some(t) => logscale_fit_from(ts, m.log_floor, t),
        None => logscale_fit(ts, m.log_floor),
    };
    let (c0, c1, c2) = fit.map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.c0, f.c1, f.c2));
    RunMetrics {
        t_conv: detect_convergence(ts, cfg.conv_eps, cfg.conv_hold),
        c0,
        c1,
        c2,
        rms_e1: tail_rms_e1(ts, m.rms_window),
        max_abs_u: ts.iter().map(|s| s.u.abs()).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nldamp_core::Sample;

    fn series(e1: &[f64]) -> TimeSeries {
        let samples = e1.iter().map(|&e| Sample {
            e1: e,
            ..Sample::default()
        });
        TimeSeries::from_samples(0.0, 0.5, samples)
    }

    #[test]
    fn tail_rms_uses_trailing_window() {
        let ts = series(&[100.0, 3.0, -4.0]);
        // t = 0, 0.5, 1.0; a 0.5 s window keeps the last two samples.
        assert!((tail_rms_e1(&ts, 0.5) - (12.5f64).sqrt()).abs() < 1e-12);
        assert!(tail_rms_e1(&series(&[]), 1.0).is_nan());
    }
}
