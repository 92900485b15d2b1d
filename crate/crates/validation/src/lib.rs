//! Acceptance criteria for the controller, the integrator and the
//! certification tools. Each check returns a [`Check`] with the measured
//! quantities so failures are diagnosable from the report alone.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nldamp_cli::commands::Ctx;
use nldamp_cli::figures::{self, FIGURES};
use nldamp_cli::metrics::tail_rms_e1;
use nldamp_cli::scenario::Overrides;
use nldamp_core::certify::{
    attractor_slope, contraction_estimate, grid_certificate, k_scaling_check, logscale_fit,
    logscale_fit_from, lyapunov_v, lyapunov_vdot, GridSpec, PMatrix,
};
use nldamp_core::{
    detect_convergence, jacobian_tracking, make_constant, make_slope, rhs_tracking, simulate,
    ErrorState, GainParams, IntegratorConfig, PdGains, PlantState, SimOutcome, System, Termination,
};

pub struct Check {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(id: u32, name: &'static str, pass: bool, detail: String) -> Self {
        Self {
            id,
            name,
            pass,
            detail,
        }
    }
}

/// The five ramp-tracking starting states.
pub const RAMP_INITS: [(f64, f64); 5] = [
    (0.5, 50.0),
    (0.1, 20.0),
    (1.0, 0.0),
    (1.5, -30.0),
    (0.3, -20.0),
];

pub const RAMP_GAIN: f64 = 100.0;
pub const RAMP_MU: f64 = 1e-4;

fn ramp_runs(t_end: f64, stop_on_convergence: bool) -> Vec<SimOutcome> {
    let system = System::Tracking(GainParams::new(RAMP_GAIN, RAMP_MU).unwrap());
    let cfg = IntegratorConfig {
        t_end,
        stop_on_convergence,
        ..IntegratorConfig::default()
    };
    let reference = make_slope(1.0, t_end).unwrap();
    RAMP_INITS
        .iter()
        .map(|&(a, b)| simulate(&system, PlantState::new(a, b), &reference, None, &cfg).unwrap())
        .collect()
}

fn setpoint_run(system: System, init: PlantState, t_end: f64, stop: bool) -> SimOutcome {
    let cfg = IntegratorConfig {
        t_end,
        stop_on_convergence: stop,
        ..IntegratorConfig::default()
    };
    simulate(
        &system,
        init,
        &make_constant(0.0, t_end).unwrap(),
        None,
        &cfg,
    )
    .unwrap()
}

/// 1. Analytic Jacobian against central differences at 10⁴ random points.
pub fn jacobian_correctness() -> Check {
    const TOL: f64 = 1e-5;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let e1 = sign(&mut rng) * rng.random_range(1e-3..=5.0);
        let e2 = sign(&mut rng) * rng.random_range(0.0..=50.0);
        let k = if rng.random_bool(0.5) { 1.0 } else { 100.0 };
        let mu = if rng.random_bool(0.5) { 0.0 } else { 1e-4 };
        let p = GainParams::new(k, mu).unwrap();
        let e = ErrorState::new(e1, e2);
        let j = jacobian_tracking(e, &p).unwrap();
        let f = |e1: f64, e2: f64| rhs_tracking(ErrorState::new(e1, e2), &p).unwrap();
        let h1 = 1e-6 * e1.abs();
        let h2 = 1e-6 * e2.abs().max(1.0);
        let (a, b) = (f(e1 + h1, e2), f(e1 - h1, e2));
        let (c, d) = (f(e1, e2 + h2), f(e1, e2 - h2));
        let numeric = [
            (a.d1 - b.d1) / (2.0 * h1),
            (c.d1 - d.d1) / (2.0 * h2),
            (a.d2 - b.d2) / (2.0 * h1),
            (c.d2 - d.d2) / (2.0 * h2),
        ];
        let analytic = [j.a11, j.a12, j.a21, j.a22];
        for (x, y) in analytic.iter().zip(numeric) {
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1.0));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Check::new(
        1,
        "Jacobian matches central differences",
        worst < TOL && secs < 5.0,
        format!("max rel err {worst:.2e} (tol {TOL:.0e}), {secs:.2} s (limit 5 s)"),
    )
}

/// 2. Along-state form on the default grid.
pub fn quadform_structure() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for mu in [RAMP_MU, 0.0] {
        let p = GainParams::new(RAMP_GAIN, mu).unwrap();
        let cert =
            grid_certificate(&p, &PMatrix::energy(p.k).unwrap(), &GridSpec::default()).unwrap();
        let s = &cert.summary;
        let all_nonpositive = cert.records.iter().all(|r| r.quadform <= 0.0);
        let matched_dev = match s.matched_coefficient {
            Some(0.5) => s.max_dev_half,
            Some(_) => s.max_dev_three_quarters,
            None => f64::INFINITY,
        };
        let ok = all_nonpositive
            && s.max_quadform == 0.0
            && s.zero_set_is_e2_axis
            && matched_dev <= 1e-10
            && s.nonnegative_eig_points > 0;
        pass &= ok;
        parts.push(format!(
            "mu={mu:e}: {} pts, max={:e}, zeros on e2=0: {}, coeff {:?} dev {:.1e}, J with eig>=0 at {} pts",
            s.points, s.max_quadform, s.zero_set_is_e2_axis, s.matched_coefficient, matched_dev, s.nonnegative_eig_points
        ));
    }
    Check::new(
        2,
        "Along-state form is semidefinite, zero on e2=0",
        pass,
        parts.join("; "),
    )
}

/// Fourth-order derivative of `v` at `i` from a five-point stencil that stays
/// inside one quadrant of the error plane, where the energy rate is smooth.
fn piecewise_derivative(v: &[f64], e: &[ErrorState], i: usize, dt: f64) -> Option<f64> {
    let same_quadrant = |lo: usize, hi: usize| {
        let q = |j: usize| (e[j].e1.signum(), e[j].e2.signum());
        (lo..=hi).all(|j| q(j) == q(lo))
    };
    let n = v.len();
    if i >= 2 && i + 2 < n && same_quadrant(i - 2, i + 2) {
        Some((v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * dt))
    } else if i + 4 < n && same_quadrant(i, i + 4) {
        Some(
            (-25.0 * v[i] + 48.0 * v[i + 1] - 36.0 * v[i + 2] + 16.0 * v[i + 3] - 3.0 * v[i + 4])
                / (12.0 * dt),
        )
    } else if i >= 4 && same_quadrant(i - 4, i) {
        Some(
            (25.0 * v[i] - 48.0 * v[i - 1] + 36.0 * v[i - 2] - 16.0 * v[i - 3] + 3.0 * v[i - 4])
                / (12.0 * dt),
        )
    } else {
        None
    }
}

/// 3. Energy rate along ramp-tracking runs.
pub fn energy_law() -> Check {
    const REL_TOL: f64 = 1e-3;
    const MONO_TOL: f64 = 1e-9;
    // A step's change in V must exceed this multiple of the rounding in V
    // left by forming e = x - r.
    const RESOLUTION: f64 = 1e4;
    let p = GainParams::new(RAMP_GAIN, RAMP_MU).unwrap();
    let (mut worst_rel, mut worst_rise) = (0.0f64, 0.0f64);
    let (mut compared, mut unresolved, mut total) = (0usize, 0usize, 0usize);
    for out in ramp_runs(5.0, true) {
        let s = out.series.samples();
        let dt = out.series.dt();
        let e: Vec<ErrorState> = s.iter().map(|x| x.error()).collect();
        let v: Vec<f64> = e.iter().map(|&x| lyapunov_v(x, &p)).collect();
        for w in v.windows(2) {
            worst_rise = worst_rise.max((w[1] - w[0]) / v[0]);
        }
        for (i, x) in s.iter().enumerate() {
            total += 1;
            let rate = lyapunov_vdot(e[i], &p).unwrap();
            let rounding = f64::EPSILON
                * (p.k * x.e1.abs() * x.x1.abs().max(x.r.abs())
                    + x.e2.abs() * x.x2.abs().max(x.rdot.abs()));
            if rate.abs() * dt <= RESOLUTION * rounding {
                unresolved += 1;
                continue;
            }
            if let Some(diff) = piecewise_derivative(&v, &e, i, dt) {
                worst_rel = worst_rel.max((diff - rate).abs() / rate.abs());
                compared += 1;
            }
        }
    }
    Check::new(
        3,
        "Differenced V matches the energy rate; V non-increasing",
        worst_rel < REL_TOL && worst_rise <= MONO_TOL,
        format!(
            "max rel err {worst_rel:.2e} (tol {REL_TOL:.0e}) at {compared}/{total} samples ({unresolved} below rounding), max rise {worst_rise:.2e}·V(0) (tol {MONO_TOL:.0e})"
        ),
    )
}

/// 4. Convergence and forgetting of the initial state on the ramp.
pub fn uniform_convergence() -> Check {
    const EPS: f64 = 1e-6;
    const T_END: f64 = 5.0;
    let started = Instant::now();
    let converged: Vec<Option<f64>> = ramp_runs(T_END, true)
        .iter()
        .map(|o| {
            (o.terminated == Termination::Converged)
                .then_some(o.converged_at)
                .flatten()
        })
        .collect();
    let all_converged = converged.iter().all(|c| c.is_some_and(|t| t <= T_END));

    let full = ramp_runs(T_END, false);
    let mut worst_gap: f64 = 0.0;
    let mut min_beta = f64::INFINITY;
    for i in 0..full.len() {
        for j in i + 1..full.len() {
            let (a, b) = (
                full[i].series.last().unwrap(),
                full[j].series.last().unwrap(),
            );
            worst_gap = worst_gap.max((a.x1 - b.x1).hypot(a.x2 - b.x2));
            let beta = contraction_estimate(&full[i].series, &full[j].series, 0.0)
                .map_or(f64::NAN, |r| r.beta);
            min_beta = min_beta.min(beta);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let final_err: Vec<String> = full
        .iter()
        .map(|o| format!("{:.1e}", o.series.last().unwrap().error().norm()))
        .collect();
    Check::new(
        4,
        "All ramp starts converge within 5 s and forget their start",
        all_converged && worst_gap < EPS && min_beta > 0.0 && secs < 30.0,
        format!(
            "converged {}/5 (|e| at 5 s: {}), max pairwise gap {worst_gap:.2e} (tol {EPS:.0e}), min beta {min_beta:.3}, {secs:.1} s",
            converged.iter().filter(|c| c.is_some()).count(),
            final_err.join(", ")
        ),
    )
}

/// 5. Near-origin slope of the set-point phase trajectory.
pub fn attractor() -> Check {
    const WINDOW: f64 = 1e-2;
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [1.0, 100.0] {
        let out = setpoint_run(
            System::Setpoint(GainParams::new(k, 0.0).unwrap()),
            PlantState::new(1.0, 0.0),
            20.0,
            true,
        );
        let target = -k.sqrt();
        match attractor_slope(&out.series, WINDOW) {
            Ok(slope) => {
                let rel = (slope - target).abs() / target.abs();
                pass &= rel <= 0.05;
                parts.push(format!(
                    "k={k}: slope {slope:.3} vs {target:.3} ({:.0}% off)",
                    rel * 100.0
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("k={k}: {e}"));
            }
        }
    }
    Check::new(
        5,
        "Near-origin slope equals -sqrt(k)",
        pass,
        parts.join("; "),
    )
}

/// 6. The set-point loop never crosses x1 = 0 before converging.
pub fn no_axis_crossing() -> Check {
    let system = System::Setpoint(GainParams::new(RAMP_GAIN, 0.0).unwrap());
    let mut crossings = Vec::new();
    let mut runs = 0;
    for x1 in [1.0, -1.0, 0.1, -0.1] {
        for x2 in [0.0, 10.0, -10.0] {
            runs += 1;
            let out = setpoint_run(system, PlantState::new(x1, x2), 5.0, true);
            let sign0 = x1.signum();
            let crossed = out.terminated.is_failure()
                || out
                    .series
                    .iter()
                    .any(|s| s.x1 != 0.0 && s.x1.signum() != sign0);
            if crossed {
                crossings.push(format!("({x1}, {x2}) {}", out.terminated.as_str()));
            }
        }
    }
    Check::new(
        6,
        "Set-point runs keep the sign of x1",
        crossings.is_empty(),
        format!(
            "{runs} runs, violations: {}",
            if crossings.is_empty() {
                "none".into()
            } else {
                crossings.join(", ")
            }
        ),
    )
}

/// 7. Time-scaling symmetry across gains.
pub fn k_scaling() -> Check {
    const TOL: f64 = 1e-4;
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [10.0, 100.0, 1000.0] {
        let p = GainParams::new(k, 0.0).unwrap();
        let init = PlantState::new(1.0, 0.0);
        let coarse = k_scaling_check(&p, init, 1e-4, 1.0);
        let fine = k_scaling_check(&p, init, 5e-5, 1.0);
        match (coarse, fine) {
            (Ok(c), Ok(f)) => {
                let ratio = c / f;
                pass &= c < TOL && ratio >= 2.0;
                parts.push(format!("k={k}: {c:.2e} -> {f:.2e} (x{ratio:.1})"));
            }
            (c, f) => {
                pass = false;
                parts.push(format!("k={k}: {:?} / {:?}", c.err(), f.err()));
            }
        }
    }
    Check::new(
        7,
        "Gain scaling is a time rescaling",
        pass,
        format!("{} (tol {TOL:.0e}, reduction >= 2)", parts.join("; ")),
    )
}

/// 8. Log-scale decay: accelerating for the nonlinear loop, linear for PD.
pub fn logscale_rates() -> Check {
    const PD_TAIL_START: f64 = 1.5;
    const PD_FLOOR: f64 = 1e-13;
    const FLOOR: f64 = 1e-12;
    let init = PlantState::new(1.0, 0.0);
    let nonlinear = setpoint_run(
        System::Setpoint(GainParams::new(100.0, 0.0).unwrap()),
        init,
        5.0,
        true,
    );
    let pd = setpoint_run(
        System::Pd(PdGains::critically_damped(100.0).unwrap()),
        init,
        5.0,
        false,
    );
    let nl_fit = logscale_fit(&nonlinear.series, FLOOR);
    let pd_fit = logscale_fit_from(&pd.series, PD_FLOOR, PD_TAIL_START);
    let t_nl = detect_convergence(&nonlinear.series, 1e-6, 0.05);
    let t_pd = detect_convergence(&pd.series, 1e-6, 0.05);
    let (Ok(nl), Ok(pdf)) = (nl_fit, pd_fit) else {
        return Check::new(8, "Log-scale decay rates", false, "fit failed".into());
    };
    let c1_ok = (pdf.c1 - -4.34).abs() <= 0.434;
    let faster = matches!((t_nl, t_pd), (Some(a), Some(b)) if a < b);
    Check::new(
        8,
        "Log-scale decay rates",
        nl.c2 < -0.5 && pdf.c2.abs() < 0.05 && c1_ok && faster,
        format!(
            "nonlinear c2 {:.2} (< -0.5); PD tail c1 {:.3} (-4.34 ± 10%), c2 {:.4} (|c2| < 0.05); t_conv {:.3} s vs PD {:.3} s",
            nl.c2,
            pdf.c1,
            pdf.c2,
            t_nl.unwrap_or(f64::NAN),
            t_pd.unwrap_or(f64::NAN)
        ),
    )
}

/// 9. Noisy trapezoid tracking from the canonical figure scenario.
pub fn noise_robustness() -> Check {
    let scenario = figures::scenario("fig5").unwrap();
    let window = scenario.metrics().rms_window;
    let noisy = scenario.simulation_plan().unwrap();
    let mut quiet_scenario = scenario.clone();
    quiet_scenario.noise = None;
    let quiet = quiet_scenario.simulation_plan().unwrap();

    let system = |label: &str| noisy.systems.iter().find(|(l, _)| l == label).unwrap().1;
    let init = noisy.inits[0];
    let run = |plan: &nldamp_cli::scenario::SimulationPlan, s: System| {
        simulate(&s, init, &plan.reference, plan.noise.as_ref(), &plan.cfg).unwrap()
    };
    let reg_noisy = run(&noisy, system("nonlinear"));
    let reg_quiet = run(&quiet, system("nonlinear"));
    let bare = run(&noisy, system("mu0"));

    let peak = |o: &SimOutcome| o.series.iter().map(|s| s.u.abs()).fold(0.0, f64::max);
    let bounded = reg_noisy.terminated == Termination::Completed
        && peak(&reg_noisy).is_finite()
        && peak(&reg_noisy) <= noisy.cfg.blowup_bound;
    let (rms_noisy, rms_quiet) = (
        tail_rms_e1(&reg_noisy.series, window),
        tail_rms_e1(&reg_quiet.series, window),
    );
    let rms_ok = rms_noisy <= 3.0 * rms_quiet;
    let bare_bad = bare.terminated.is_failure() || peak(&bare) > 10.0 * peak(&reg_noisy);
    Check::new(
        9,
        "Regularization keeps the noisy run bounded",
        bounded && rms_ok && bare_bad,
        format!(
            "mu=1e-4 {} peak |u| {:.3}; tail RMS e1 {rms_noisy:.2e} vs noise-free {rms_quiet:.2e} (limit 3x); mu=0 {} peak |u| {:.3e}",
            reg_noisy.terminated.as_str(),
            peak(&reg_noisy),
            bare.terminated.as_str(),
            peak(&bare)
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// 10. Every figure bundle is byte-identical across invocations.
pub fn determinism() -> Check {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (name, _) in FIGURES {
        for dir in [a.path(), b.path()] {
            figures::run(
                name,
                &Overrides::default(),
                Ctx {
                    out: dir,
                    quiet: true,
                },
            )
            .unwrap();
        }
    }
    let (la, lb) = (csv_files(a.path()), csv_files(b.path()));
    if la != lb {
        mismatched.push("file sets differ".to_string());
    }
    for rel in &la {
        files += 1;
        if std::fs::read(a.path().join(rel)).ok() != std::fs::read(b.path().join(rel)).ok() {
            mismatched.push(rel.display().to_string());
        }
    }
    Check::new(
        10,
        "Figure bundles are byte-identical across runs",
        mismatched.is_empty() && files > 0,
        format!(
            "{files} CSV files compared, mismatches: {}",
            if mismatched.is_empty() {
                "none".into()
            } else {
                mismatched.join(", ")
            }
        ),
    )
}

pub fn all() -> Vec<fn() -> Check> {
    vec![
        jacobian_correctness,
        quadform_structure,
        energy_law,
        uniform_convergence,
        attractor,
        no_axis_crossing,
        k_scaling,
        logscale_rates,
        noise_robustness,
        determinism,
    ]
}
