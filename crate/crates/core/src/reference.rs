//! Piecewise-quadratic reference trajectories and the seeded measurement
//! noise channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluations this far past the profile end are still accepted and use the
/// last segment. Covers the rounding of `i·dt` at the final integrator stage.
const DOMAIN_SLACK: f64 = 1e-9;

/// Reference value with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub r: f64,
    pub rdot: f64,
    pub rddot: f64,
}

/// `r(t) = c0 + c1 τ + c2 τ²` with `τ = t - t_start` on `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub coeffs: [f64; 3],
}

impl Segment {
    fn eval(&self, t: f64) -> RefSample {
        let tau = t - self.t_start;
        let [c0, c1, c2] = self.coeffs;
        RefSample {
            r: c0 + c1 * tau + c2 * tau * tau,
            rdot: c1 + 2.0 * c2 * tau,
            rddot: 2.0 * c2,
        }
    }

    /// Segment starting at `t_start` whose value and slope continue `self`.
    fn continue_with(&self, t_end: f64, accel: f64) -> Segment {
        let end = self.eval(self.t_end);
        Segment {
            t_start: self.t_end,
            t_end,
            coeffs: [end.r, end.rdot, 0.5 * accel],
        }
    }
}

/// A C¹ reference built from contiguous quadratic segments covering `[0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefProfile {
    segments: Vec<Segment>,
}

impl RefProfile {
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidProfile("profile has no segments".into()))?;
        if first.t_start != 0.0 {
            return Err(Error::InvalidProfile(
                "first segment must start at t = 0".into(),
            ));
        }
        for s in &segments {
            if !(s.t_end > s.t_start) || s.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidProfile(format!("bad segment {s:?}")));
            }
        }
        for w in segments.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.t_end != b.t_start {
                return Err(Error::InvalidProfile(format!(
                    "gap or overlap between {} and {}",
                    a.t_end, b.t_start
                )));
            }
            let (ea, sb) = (a.eval(a.t_end), b.eval(b.t_start));
            if ea.r != sb.r || ea.rdot != sb.rdot {
                return Err(Error::InvalidProfile(format!("not C1 at t = {}", a.t_end)));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    /// End of the last accelerating segment; zero for profiles without one.
    pub fn transient_end(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.coeffs[2] != 0.0)
            .map(|s| s.t_end)
            .fold(0.0, f64::max)
    }

    /// Active segment is the one with `t_start <= t < t_end`; the last one is closed.
    pub fn eval(&self, t: f64) -> Result<RefSample> {
        let t_end = self.t_end();
        if !(t >= 0.0 && t <= t_end + DOMAIN_SLACK * t_end.max(1.0)) {
            return Err(Error::OutOfDomain { t, t_end });
        }
        let idx = self.segments.partition_point(|s| s.t_end <= t);
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        Ok(seg.eval(t))
    }

    /// Left limit at `t`, used to check continuity at segment joints.
    pub fn eval_left(&self, t: f64) -> Result<RefSample> {
        let idx = self.segments.partition_point(|s| s.t_end < t);
        match self.segments.get(idx) {
            Some(seg) if t > 0.0 => Ok(seg.eval(t)),
            _ => self.eval(t),
        }
    }
}

pub fn eval_ref(profile: &RefProfile, t: f64) -> Result<RefSample> {
    profile.eval(t)
}

fn check_horizon(t_end: f64) -> Result<()> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    Ok(())
}

/// `r(t) = value`.
pub fn make_constant(value: f64, t_end: f64) -> Result<RefProfile> {
    check_horizon(t_end)?;
    RefProfile::from_segments(vec![Segment {
        t_start: 0.0,
        t_end,
        coeffs: [value, 0.0, 0.0],
    }])
}

/// `r(t) = v·t`.
pub fn make_slope(v: f64, t_end: f64) -> Result<RefProfile> {
    check_horizon(t_end)?;
    RefProfile::from_segments(vec![Segment {
        t_start: 0.0,
        t_end,
        coeffs: [0.0, v, 0.0],
    }])
}

/// Trapezoidal velocity profile starting at rest from `r = 0`: constant
/// acceleration up to `v_max`, cruise for `t_cruise`, symmetric deceleration,
/// then hold position until `t_end`.
pub fn make_trapezoid(v_max: f64, accel: f64, t_cruise: f64, t_end: f64) -> Result<RefProfile> {
    check_horizon(t_end)?;
    if !(accel.is_finite() && accel > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "acceleration must be positive, got {accel}"
        )));
    }
    if !(v_max.is_finite() && t_cruise.is_finite() && t_cruise >= 0.0) {
        return Err(Error::InvalidProfile(
            "v_max and t_cruise must be finite, t_cruise >= 0".into(),
        ));
    }
    let ramp = v_max.abs() / accel;
    let a = accel.copysign(v_max);
    if v_max == 0.0 {
        return make_constant(0.0, t_end);
    }
    let t1 = ramp;
    let t2 = t1 + t_cruise;
    let t3 = t2 + ramp;
    if t3 > t_end {
        return Err(Error::InvalidProfile(format!(
            "motion needs {t3} s but the profile ends at {t_end} s"
        )));
    }

    let mut segments = vec![Segment {
        t_start: 0.0,
        t_end: t1,
        coeffs: [0.0, 0.0, 0.5 * a],
    }];
    if t_cruise > 0.0 {
        let next = segments.last().unwrap().continue_with(t2, 0.0);
        segments.push(next);
    }
    let decel = segments.last().unwrap().continue_with(t3, -a);
    segments.push(decel);
    if t_end > t3 {
        // residual velocity here is rounding-level and kept for exact C¹ joints
        let tail = segments.last().unwrap().continue_with(t_end, 0.0);
        segments.push(tail);
    }
    RefProfile::from_segments(segments)
}

/// Zero-order-hold Gaussian measurement noise on both plant coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation on `x1`.
    pub sigma1: f64,
    /// Standard deviation on `x2`.
    pub sigma2: f64,
    /// Hold interval between fresh draws.
    pub sample_dt: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma1: 1e-4,
            sigma2: 1e-3,
            sample_dt: 1e-3,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParams(
                "noise sigmas must be non-negative".into(),
            ));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(Error::InvalidParams(
                "noise sample_dt must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Stream ids used with [`ChaCha8Rng::set_stream`] for each measured coordinate.
pub const X1_STREAM: u64 = 1;
pub const X2_STREAM: u64 = 2;

/// Stateful noise generator for one simulation.
///
/// Each coordinate draws from its own ChaCha8 stream (keyed by
/// `seed_from_u64(seed)`, stream ids [`X1_STREAM`] and [`X2_STREAM`]), so the
/// two channels are independent. A draw is made per hold interval
/// `floor(t / sample_dt)`; query times must be non-decreasing.
#[derive(Debug, Clone)]
pub struct NoiseChannel {
    config: NoiseConfig,
    rng1: ChaCha8Rng,
    rng2: ChaCha8Rng,
    /// Index of the hold interval `held` belongs to.
    interval: Option<u64>,
    held: (f64, f64),
}

impl NoiseChannel {
    pub fn new(config: NoiseConfig) -> Self {
        let mut rng1 = ChaCha8Rng::seed_from_u64(config.seed);
        rng1.set_stream(X1_STREAM);
        let mut rng2 = ChaCha8Rng::seed_from_u64(config.seed);
        rng2.set_stream(X2_STREAM);
        Self {
            config,
            rng1,
            rng2,
            interval: None,
            held: (0.0, 0.0),
        }
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    /// Noise offsets `(n1, n2)` held at time `t`.
    pub fn offsets(&mut self, t: f64) -> (f64, f64) {
        // the small bias keeps exact multiples of sample_dt in their own interval
        let target = (t / self.config.sample_dt + 1e-9).floor().max(0.0) as u64;
        while self.interval.is_none_or(|i| i < target) {
            let z1: f64 = self.rng1.sample(StandardNormal);
            let z2: f64 = self.rng2.sample(StandardNormal);
            self.held = (self.config.sigma1 * z1, self.config.sigma2 * z2);
            self.interval = Some(self.interval.map_or(0, |i| i + 1));
        }
        self.held
    }
}

/// Measured `(x1, x2)` under the channel's noise at time `t`.
pub fn noisy_measurement(x1: f64, x2: f64, t: f64, channel: &mut NoiseChannel) -> (f64, f64) {
    let (n1, n2) = channel.offsets(t);
    (x1 + n1, x2 + n2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn slope_profile() {
        let p = make_slope(1.0, 10.0).unwrap();
        assert_eq!(
            p.eval(2.0).unwrap(),
            RefSample {
                r: 2.0,
                rdot: 1.0,
                rddot: 0.0
            }
        );
        assert_eq!(make_slope(1.0, 5.0).unwrap().eval(1.0).unwrap().r, 1.0);
        assert_eq!(make_slope(-2.0, 5.0).unwrap().eval(3.0).unwrap().r, -6.0);
        let zero = make_slope(0.0, 5.0).unwrap();
        assert_eq!(
            zero.eval(4.2).unwrap(),
            RefSample {
                r: 0.0,
                rdot: 0.0,
                rddot: 0.0
            }
        );
        assert_eq!(p.transient_end(), 0.0);
    }

    #[test]
    fn constant_profile() {
        let p = make_constant(0.0, 3.0).unwrap();
        for t in [0.0, 1.5, 3.0] {
            assert_eq!(
                p.eval(t).unwrap(),
                RefSample {
                    r: 0.0,
                    rdot: 0.0,
                    rddot: 0.0
                }
            );
        }
    }

    #[test]
    fn out_of_domain() {
        let p = make_slope(1.0, 2.0).unwrap();
        assert!(matches!(p.eval(-0.1), Err(Error::OutOfDomain { .. })));
        assert!(matches!(p.eval(2.5), Err(Error::OutOfDomain { .. })));
        assert!(p.eval(2.0 + 1e-12).is_ok());
    }

    #[test]
    fn trapezoid_values() {
        let p = make_trapezoid(1.0, 1.0, 2.0, 5.0).unwrap();
        assert_eq!(
            p.eval(0.5).unwrap(),
            RefSample {
                r: 0.125,
                rdot: 0.5,
                rddot: 1.0
            }
        );
        assert_eq!(p.eval(1.5).unwrap().rdot, 1.0);
        assert_eq!(p.eval(3.5).unwrap().rdot, 0.5);
        assert_eq!(p.eval(3.5).unwrap().rddot, -1.0);
        // rest: ½ + 2 + ½
        let tail = p.eval(4.5).unwrap();
        assert_eq!(
            tail,
            RefSample {
                r: 3.0,
                rdot: 0.0,
                rddot: 0.0
            }
        );
        assert_eq!(p.transient_end(), 4.0);
    }

    #[test]
    fn trapezoid_joints_are_c1() {
        let p = make_trapezoid(1.0, 1.0, 2.0, 5.0).unwrap();
        assert_eq!(p.eval_left(1.0).unwrap().rdot, 1.0);
        assert_eq!(p.eval(1.0).unwrap().rdot, 1.0);
        for seg in &p.segments()[1..] {
            let (l, r) = (
                p.eval_left(seg.t_start).unwrap(),
                p.eval(seg.t_start).unwrap(),
            );
            assert_eq!(l.r, r.r);
            assert_eq!(l.rdot, r.rdot);
        }
    }

    #[test]
    fn trapezoid_negative_and_degenerate() {
        let p = make_trapezoid(-2.0, 4.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(p.eval(0.5).unwrap().rdot, -2.0);
        assert_eq!(p.eval(2.0).unwrap().rdot, 0.0);
        let zero = make_trapezoid(0.0, 1.0, 1.0, 3.0).unwrap();
        assert_eq!(zero.segments().len(), 1);
        assert_eq!(zero.eval(2.0).unwrap().r, 0.0);
    }

    #[test]
    fn trapezoid_rejects_overlong_motion() {
        assert!(matches!(
            make_trapezoid(1.0, 1.0, 2.0, 3.9),
            Err(Error::InvalidProfile(_))
        ));
        assert!(make_trapezoid(1.0, 0.0, 2.0, 10.0).is_err());
    }

    #[test]
    fn rejects_discontinuous_segments() {
        let segs = vec![
            Segment {
                t_start: 0.0,
                t_end: 1.0,
                coeffs: [0.0, 1.0, 0.0],
            },
            Segment {
                t_start: 1.0,
                t_end: 2.0,
                coeffs: [1.0, 2.0, 0.0],
            },
        ];
        assert!(RefProfile::from_segments(segs).is_err());
        let gap = vec![
            Segment {
                t_start: 0.0,
                t_end: 1.0,
                coeffs: [0.0, 0.0, 0.0],
            },
            Segment {
                t_start: 1.5,
                t_end: 2.0,
                coeffs: [0.0, 0.0, 0.0],
            },
        ];
        assert!(RefProfile::from_segments(gap).is_err());
    }

    #[test]
    fn silent_channel_passes_state_through() {
        let cfg = NoiseConfig {
            sigma1: 0.0,
            sigma2: 0.0,
            ..NoiseConfig::default()
        };
        let mut ch = NoiseChannel::new(cfg);
        for i in 0..100 {
            let t = i as f64 * 1e-4;
            assert_eq!(noisy_measurement(0.3, -2.0, t, &mut ch), (0.3, -2.0));
        }
    }

    #[test]
    fn noise_is_held_between_refreshes() {
        let cfg = NoiseConfig {
            sigma1: 1.0,
            sigma2: 1.0,
            sample_dt: 1e-3,
            seed: 3,
        };
        let mut ch = NoiseChannel::new(cfg);
        let a = ch.offsets(0.0);
        assert_eq!(ch.offsets(0.0009), a);
        let b = ch.offsets(0.001);
        assert_ne!(a, b);
        assert_eq!(ch.offsets(0.0015), b);
    }

    #[test]
    fn same_seed_same_sequence() {
        let cfg = NoiseConfig {
            seed: 42,
            ..NoiseConfig::default()
        };
        let (mut a, mut b) = (NoiseChannel::new(cfg), NoiseChannel::new(cfg));
        for i in 0..1000 {
            let t = i as f64 * 3e-4;
            assert_eq!(a.offsets(t), b.offsets(t));
        }
        let mut c = NoiseChannel::new(NoiseConfig { seed: 43, ..cfg });
        assert_ne!(a.offsets(1.0), c.offsets(1.0));
    }

    fn draws(n: usize, cfg: NoiseConfig) -> (Vec<f64>, Vec<f64>) {
        let mut ch = NoiseChannel::new(cfg);
        (0..n).map(|i| ch.offsets(i as f64 * cfg.sample_dt)).unzip()
    }

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn noise_moments() {
        let sigma = 1e-3;
        let n = 100_000;
        let (x1, _) = draws(
            n,
            NoiseConfig {
                sigma1: sigma,
                sigma2: 1.0,
                sample_dt: 1e-3,
                seed: 7,
            },
        );
        let (mean, std) = mean_std(&x1);
        assert!(mean.abs() < 5.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        assert!((std - sigma).abs() < 0.02 * sigma, "std {std}");
    }

    #[test]
    fn noise_channels_uncorrelated() {
        let (a, b) = draws(
            100_000,
            NoiseConfig {
                sigma1: 1.0,
                sigma2: 1.0,
                sample_dt: 1e-3,
                seed: 11,
            },
        );
        let (ma, sa) = mean_std(&a);
        let (mb, sb) = mean_std(&b);
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (a.len() as f64 - 1.0);
        assert!((cov / (sa * sb)).abs() < 0.02);
    }
}
