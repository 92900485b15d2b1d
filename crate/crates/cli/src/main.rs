use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nldamp_cli::commands::{self, CertifyArgs, Ctx, EXIT_INPUT};
use nldamp_cli::figures;
use nldamp_cli::scenario::{Overrides, Scenario};
use nldamp_core::certify::Axis;

#[derive(Parser)]
#[command(
    name = "nldamp",
    version,
    about = "Nonlinear damping controller simulations and certificates"
)]
struct Cli {
    /// Output root directory.
    #[arg(long, global = true, env = "NLDAMP_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct OverrideArgs {
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            k: a.k,
            mu: a.mu,
            dt: a.dt,
            t_end: a.t_end,
            seed: a.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every system of a scenario from every initial condition.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Repeat a scenario for each gain in its [sweep] table.
    Sweep {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run the scenario systems against its [baseline] and tabulate metrics.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Emit the data bundle of a canonical figure (fig1 .. fig5).
    Figure {
        name: String,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Evaluate the contraction certificate over an error grid.
    Certify {
        #[arg(long, default_value_t = 100.0, allow_hyphen_values = true)]
        k: f64,
        #[arg(long, default_value_t = 1e-4, allow_hyphen_values = true)]
        mu: f64,
        /// e1 axis as lo:hi:n.
        #[arg(long, default_value = "-2:2:101", allow_hyphen_values = true, value_parser = parse_axis)]
        e1: Axis,
        /// e2 axis as lo:hi:n.
        #[arg(long, default_value = "-2:2:101", allow_hyphen_values = true, value_parser = parse_axis)]
        e2: Axis,
        /// Skip the logarithmic e1 columns near zero.
        #[arg(long)]
        no_refine: bool,
    },
}

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(format!("expected lo:hi:n, got `{s}`"));
    };
    let lo: f64 = lo.parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("hi: {e}"))?;
    let n: usize = n.parse().map_err(|e| format!("n: {e}"))?;
    Axis::new(lo, hi, n).map_err(|e| e.to_string())
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::load(path).context("scenario rejected")
}

fn run(cli: Cli) -> Result<i32> {
    let ctx = Ctx {
        out: cli.out_dir.as_path(),
        quiet: false,
    };
    match cli.command {
        Command::Simulate {
            scenario,
            overrides,
        } => commands::simulate(load(&scenario)?, &overrides.into(), ctx),
        Command::Sweep {
            scenario,
            overrides,
        } => commands::sweep(load(&scenario)?, &overrides.into(), ctx),
        Command::Compare {
            scenario,
            overrides,
        } => commands::compare(load(&scenario)?, &overrides.into(), ctx),
        Command::Figure { name, overrides } => figures::run(&name, &overrides.into(), ctx),
        Command::Certify {
            k,
            mu,
            e1,
            e2,
            no_refine,
        } => commands::certify(
            &CertifyArgs {
                k,
                mu,
                e1,
                e2,
                refine: !no_refine,
            },
            ctx,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
