//! Parallel execution of simulation runs and their on-disk outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use nldamp_core::{simulate, PlantState, SimOutcome, System, Termination};

use crate::scenario::{Scenario, SimulationPlan};

/// One (system, initial condition) pair.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub init_index: usize,
    pub init: PlantState,
    pub system: System,
}

impl RunSpec {
    pub fn file_stem(&self) -> String {
        format!("{}_init{}", self.label, self.init_index)
    }
}

pub struct RunResult {
    pub spec: RunSpec,
    pub outcome: SimOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub init_index: usize,
    pub init: [f64; 2],
    pub terminated: &'static str,
    pub converged_at: Option<f64>,
    pub samples: usize,
    pub final_time: f64,
    pub final_error_norm: f64,
    pub max_abs_u: f64,
    pub csv: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub runs: Vec<RunRecord>,
    pub wall_clock_s: f64,
}

pub fn expand(plan: &SimulationPlan) -> Vec<RunSpec> {
    plan.systems
        .iter()
        .flat_map(|(label, system)| {
            plan.inits
                .iter()
                .enumerate()
                .map(move |(i, &init)| RunSpec {
                    label: label.clone(),
                    init_index: i,
                    init,
                    system: *system,
                })
        })
        .collect()
}

/// Runs every spec in parallel; results keep the input order.
pub fn execute(plan: &SimulationPlan, specs: Vec<RunSpec>) -> Result<Vec<RunResult>> {
    specs
        .into_par_iter()
        .map(|spec| {
            let outcome = simulate(
                &spec.system,
                spec.init,
                &plan.reference,
                plan.noise.as_ref(),
                &plan.cfg,
            )
            .with_context(|| format!("run {}", spec.file_stem()))?;
            Ok(RunResult { spec, outcome })
        })
        .collect()
}

pub fn max_abs_u(outcome: &SimOutcome) -> f64 {
    outcome.series.iter().map(|s| s.u.abs()).fold(0.0, f64::max)
}

pub fn any_failure(results: &[RunResult]) -> bool {
    results.iter().any(|r| r.outcome.terminated.is_failure())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

/// Writes per-run CSVs, the optional plot data and the manifest.
pub fn write_outputs(
    out_root: &Path,
    scenario: &Scenario,
    command: &str,
    results: &[RunResult],
    started: Instant,
) -> Result<PathBuf> {
    let dir = out_root.join(&scenario.outputs.csv);
    ensure_dir(&dir)?;
    let written: Vec<Result<RunRecord>> = results
        .par_iter()
        .map(|r| {
            let name = format!("{}.csv", r.spec.file_stem());
            write_file(&dir.join(&name), |w| r.outcome.series.write_csv(w))?;
            Ok(record(r, name))
        })
        .collect();
    let runs = written.into_iter().collect::<Result<Vec<_>>>()?;

    if let Some(plot) = &scenario.outputs.plotdata {
        let path = out_root.join(plot);
        if let Some(parent) = path.parent() {
            ensure_dir(parent)?;
        }
        write_file(&path, |w| {
            write_plotdata(w, results, scenario.outputs.plot_stride.max(1))
        })?;
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        scenario: scenario.name.clone(),
        scenario_sha256: scenario.hash(),
        runs,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let path = dir.join("manifest.json");
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    Ok(dir)
}

fn record(r: &RunResult, csv: String) -> RunRecord {
    let last = r.outcome.series.last();
    RunRecord {
        label: r.spec.label.clone(),
        init_index: r.spec.init_index,
        init: [r.spec.init.x1, r.spec.init.x2],
        terminated: r.outcome.terminated.as_str(),
        converged_at: r.outcome.converged_at,
        samples: r.outcome.series.len(),
        final_time: last.map_or(f64::NAN, |s| s.t),
        final_error_norm: last.map_or(f64::NAN, |s| s.error().norm()),
        max_abs_u: max_abs_u(&r.outcome),
        csv,
    }
}

fn write_plotdata<W: Write>(
    w: &mut W,
    results: &[RunResult],
    stride: usize,
) -> std::io::Result<()> {
    writeln!(w, "label,init,t,x1,x2,e1,e2,u")?;
    for r in results {
        let samples = r.outcome.series.samples();
        let last = samples.len().saturating_sub(1);
        for (i, s) in samples.iter().enumerate() {
            if i % stride == 0 || i == last {
                writeln!(
                    w,
                    "{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                    r.spec.label, r.spec.init_index, s.t, s.x1, s.x2, s.e1, s.e2, s.u
                )?;
            }
        }
    }
    Ok(())
}

pub fn print_runs(results: &[RunResult]) {
    println!(
        "{:<12} {:>4} {:>10} {:>12} {:>12}",
        "label", "init", "status", "t_conv", "|e| final"
    );
    for r in results {
        let conv = r
            .outcome
            .converged_at
            .map_or("-".to_string(), |t| format!("{t:.4}"));
        let err = r
            .outcome
            .series
            .last()
            .map_or(f64::NAN, |s| s.error().norm());
        println!(
            "{:<12} {:>4} {:>10} {:>12} {:>12.3e}",
            r.spec.label,
            r.spec.init_index,
            r.outcome.terminated.as_str(),
            conv,
            err
        );
    }
    let failed = results
        .iter()
        .filter(|r| r.outcome.terminated.is_failure())
        .count();
    if failed > 0 {
        let kinds: Vec<_> = results
            .iter()
            .filter(|r| {
                matches!(
                    r.outcome.terminated,
                    Termination::Diverged | Termination::Singular
                )
            })
            .map(|r| r.spec.file_stem())
            .collect();
        eprintln!("{failed} run(s) failed: {}", kinds.join(", "));
    }
}
