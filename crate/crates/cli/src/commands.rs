//! Subcommand implementations. Each returns the process exit code.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use nldamp_core::certify::{
    energy_rate_grid, grid_certificate, lyapunov_vdot, Axis, Certificate, GridSpec, PMatrix,
};
use nldamp_core::{ErrorState, GainParams, System};

use crate::metrics::{run_metrics, RunMetrics, METRICS_CSV_HEADER};
use crate::runner::{self, any_failure, RunResult};
use crate::scenario::{Overrides, Scenario, SimulationPlan};

/// Where outputs go and whether progress is printed.
#[derive(Debug, Clone, Copy)]
pub struct Ctx<'a> {
    pub out: &'a Path,
    pub quiet: bool,
}

impl Ctx<'_> {
    fn say(&self, line: impl std::fmt::Display) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_RUN_FAILED: i32 = 2;

fn status(results: &[RunResult]) -> i32 {
    if any_failure(results) {
        EXIT_RUN_FAILED
    } else {
        EXIT_OK
    }
}

fn prepare(mut scenario: Scenario, overrides: &Overrides) -> Result<(Scenario, SimulationPlan)> {
    scenario.apply(overrides);
    let plan = scenario.simulation_plan()?;
    Ok((scenario, plan))
}

pub fn simulate(scenario: Scenario, overrides: &Overrides, ctx: Ctx) -> Result<i32> {
    let started = Instant::now();
    let (scenario, plan) = prepare(scenario, overrides)?;
    let results = runner::execute(&plan, runner::expand(&plan))?;
    if !ctx.quiet {
        runner::print_runs(&results);
    }
    let dir = runner::write_outputs(ctx.out, &scenario, "simulate", &results, started)?;
    ctx.say(format_args!("wrote {}", dir.display()));
    Ok(status(&results))
}

pub fn sweep(scenario: Scenario, overrides: &Overrides, ctx: Ctx) -> Result<i32> {
    let started = Instant::now();
    let gains = scenario
        .sweep
        .as_ref()
        .context("missing [sweep] table")?
        .k
        .clone();
    if gains.is_empty() {
        bail!("sweep.k: at least one gain is required");
    }
    let (scenario, mut plan) = prepare(scenario, overrides)?;
    plan.systems = gains
        .iter()
        .map(|&k| {
            let system = scenario
                .system
                .with_gain(k)
                .build(&format!("sweep.k = {k}"))?;
            Ok((format!("k{k}"), system))
        })
        .collect::<Result<_>>()?;
    let results = runner::execute(&plan, runner::expand(&plan))?;
    if !ctx.quiet {
        runner::print_runs(&results);
    }
    let dir = runner::write_outputs(ctx.out, &scenario, "sweep", &results, started)?;
    ctx.say(format_args!("wrote {}", dir.display()));
    Ok(status(&results))
}

pub fn compare(scenario: Scenario, overrides: &Overrides, ctx: Ctx) -> Result<i32> {
    let started = Instant::now();
    let baseline = scenario
        .baseline
        .clone()
        .context("missing [baseline] table")?;
    let (scenario, mut plan) = prepare(scenario, overrides)?;
    let label = baseline.label();
    if plan.systems.iter().any(|(l, _)| *l == label) {
        bail!("baseline.label `{label}` collides with another system");
    }
    plan.systems.push((label, baseline.build("baseline")?));
    let results = runner::execute(&plan, runner::expand(&plan))?;
    let metrics = scenario.metrics();

    let dir = runner::write_outputs(ctx.out, &scenario, "compare", &results, started)?;
    let rows: Vec<_> = results
        .iter()
        .map(|r| (r, run_metrics(&r.outcome.series, &plan.cfg, &metrics)))
        .collect();

    if !ctx.quiet {
        print_metrics(&rows);
    }
    runner::write_file(&dir.join("compare.csv"), |w| {
        writeln!(w, "{METRICS_CSV_HEADER}")?;
        for (r, m) in &rows {
            writeln!(
                w,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.spec.label,
                r.spec.init_index,
                r.outcome.terminated.as_str(),
                m.t_conv.unwrap_or(f64::NAN),
                m.c0,
                m.c1,
                m.c2,
                m.rms_e1,
                m.max_abs_u
            )?;
        }
        Ok(())
    })?;
    ctx.say(format_args!("wrote {}", dir.display()));
    Ok(status(&results))
}

fn print_metrics(rows: &[(&RunResult, RunMetrics)]) {
    println!(
        "{:<12} {:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>11} {:>10}",
        "label", "init", "status", "t_conv", "c0", "c1", "c2", "rms e1", "max |u|"
    );
    for (r, m) in rows {
        let t_conv = m.t_conv.map_or("-".to_string(), |t| format!("{t:.4}"));
        println!(
            "{:<12} {:>4} {:>10} {:>10} {:>10.4} {:>10.4} {:>10.4} {:>11.3e} {:>10.3e}",
            r.spec.label,
            r.spec.init_index,
            r.outcome.terminated.as_str(),
            t_conv,
            m.c0,
            m.c1,
            m.c2,
            m.rms_e1,
            m.max_abs_u
        );
    }
}

/// Tabulates `|V̇|` over the scenario grid plus two slices through it.
pub fn energy_rate(mut scenario: Scenario, overrides: &Overrides, ctx: Ctx) -> Result<i32> {
    let started = Instant::now();
    scenario.apply(overrides);
    let grid = scenario.grid.clone().context("missing [grid] table")?;
    let (System::Tracking(p) | System::Setpoint(p)) = scenario.system.build("system")? else {
        bail!("system.kind must be tracking or setpoint for an energy-rate grid");
    };
    let table = energy_rate_grid(&p, &grid.e1, &grid.e2).context("grid")?;
    let dir = runner::write_outputs(ctx.out, &scenario, "energy-rate", &[], started)?;
    runner::write_file(&dir.join("energy_rate.csv"), |w| table.write_csv(w))?;
    if let Some(e2) = grid.slice_e2 {
        write_slice(
            &dir.join("slice_e1.csv"),
            "e1",
            &grid.e1,
            |a| ErrorState::new(a, e2),
            &p,
        )?;
    }
    if let Some(e1) = grid.slice_e1 {
        write_slice(
            &dir.join("slice_e2.csv"),
            "e2",
            &grid.e2,
            |b| ErrorState::new(e1, b),
            &p,
        )?;
    }
    ctx.say(format_args!("wrote {}", dir.display()));
    Ok(EXIT_OK)
}

fn write_slice(
    path: &Path,
    axis_name: &str,
    axis: &Axis,
    point: impl Fn(f64) -> ErrorState,
    p: &GainParams,
) -> Result<()> {
    runner::write_file(path, |w| {
        writeln!(w, "{axis_name},abs_vdot")?;
        for v in axis.values() {
            let rate = lyapunov_vdot(point(v), p).map_or(f64::INFINITY, f64::abs);
            writeln!(w, "{v:e},{rate:e}")?;
        }
        Ok(())
    })
}

pub struct CertifyArgs {
    pub k: f64,
    pub mu: f64,
    pub e1: Axis,
    pub e2: Axis,
    pub refine: bool,
}

pub fn certify(args: &CertifyArgs, ctx: Ctx) -> Result<i32> {
    let out = ctx.out;
    let p = GainParams::new(args.k, args.mu).context("invalid gains")?;
    let weight = PMatrix::energy(args.k)?;
    let mut grid = GridSpec::rectangular(args.e1, args.e2);
    if args.refine {
        grid.e1_refine = GridSpec::default().e1_refine;
    }
    let cert = grid_certificate(&p, &weight, &grid).context("certificate")?;
    runner::ensure_dir(out)?;
    let csv = out.join("certificate.csv");
    runner::write_file(&csv, |w| cert.write_csv(w))?;
    runner::write_file(&out.join("certificate_summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &cert.summary).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    if !ctx.quiet {
        print_certificate(&cert);
    }
    ctx.say(format_args!("wrote {}", csv.display()));
    Ok(EXIT_OK)
}

pub fn print_certificate(cert: &Certificate) {
    let s = &cert.summary;
    println!(
        "k = {}, mu = {}, P = diag({}, {})",
        cert.params.k,
        cert.params.mu,
        cert.weight.matrix().a11,
        cert.weight.matrix().a22
    );
    println!(
        "points: {} evaluated, {} singular",
        s.points,
        cert.skipped.len()
    );
    if s.is_semidefinite_with_e2_zero_set() {
        println!("max quadform = 0 on e2=0; negative elsewhere");
    } else {
        println!(
            "max quadform = {:e}; zero set has {} points (e2=0 line: {})",
            s.max_quadform,
            s.zero_set.len(),
            s.zero_set_is_e2_axis
        );
    }
    println!(
        "lambda_min in [{:e}, {:e}], lambda_max in [{:e}, {:e}]",
        s.eig_min_range.0, s.eig_min_range.1, s.eig_max_range.0, s.eig_max_range.1
    );
    println!(
        "J negative definite as a matrix: {} ({} points with a non-negative eigenvalue)",
        s.is_matrix_negative_definite(),
        s.nonnegative_eig_points
    );
    println!("closed form, c = 1/2: max rel dev {:e}", s.max_dev_half);
    println!(
        "closed form, c = 3/4: max rel dev {:e}",
        s.max_dev_three_quarters
    );
    match s.matched_coefficient {
        Some(c) => println!("matched coefficient: {c}"),
        None => println!("matched coefficient: none"),
    }
}
