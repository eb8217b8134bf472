//! Command-line front end for the spin-bath simulator.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! guarantee breached (outputs, when written, are flagged in the
//! manifest).

// `!(a < b)` guards are deliberate: unlike `a >= b` they fail closed on NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod compare;
mod config;
mod output;
mod run;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spinbath_core::exact::{ExactError, ExecMode};

use crate::config::{load_config, load_config_text, ExperimentConfig, MethodConfig};

const FIG2_PRESET: &str = include_str!("../presets/fig2.toml");
const FIG3_PRESET: &str = include_str!("../presets/fig3.toml");

#[derive(Parser)]
#[command(
    name = "spinbath",
    version,
    about = "Exact dynamics and analytic envelopes for a qubit in a finite spin bath",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config, or a previous run's manifest.json to reproduce it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override bath.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override run.method.
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,

    /// Bitwise-reproducible execution (the default).
    #[arg(long, global = true, conflicts_with = "fast")]
    deterministic: bool,

    /// Multi-threaded reductions; may differ from deterministic mode in
    /// the last few ulps.
    #[arg(long, global = true)]
    fast: bool,

    /// Override any config key, e.g. --set run.t_final=50
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ode,
    Eigenmode,
    Both,
}

impl From<MethodArg> for MethodConfig {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ode => MethodConfig::Ode,
            MethodArg::Eigenmode => MethodConfig::Eigenmode,
            MethodArg::Both => MethodConfig::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the configured model and write every artifact.
    Simulate,
    /// Evaluate analytic overlays on the snapshot grid, no propagation.
    Analytic,
    /// Closed Markovian reference dynamics.
    Markov,
    /// Eigenmode table: frequencies and qubit weights.
    Modes,
    /// Compare two trajectory CSV files.
    Compare {
        /// First trajectory file.
        a: PathBuf,
        /// Second trajectory file.
        b: PathBuf,
        /// Sample `b` linearly at `a`'s times instead of requiring
        /// exactly shared snapshot times.
        #[arg(long)]
        interpolate: bool,
        /// Also fit ln p₀ on [fit-start, fit-end] in both files and
        /// report the rate difference.
        #[arg(long, requires = "fit_end")]
        fit_start: Option<f64>,
        #[arg(long, requires = "fit_start")]
        fit_end: Option<f64>,
    },
    /// Run a packaged experiment preset (or dump its config).
    Preset {
        #[arg(value_enum)]
        name: PresetName,
        /// Print the preset's TOML to stdout instead of running it.
        #[arg(long)]
        dump_config: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    Fig2,
    Fig3,
}

impl PresetName {
    fn text(self) -> &'static str {
        match self {
            PresetName::Fig2 => FIG2_PRESET,
            PresetName::Fig3 => FIG3_PRESET,
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify_error(&err)
        }
    };
    std::process::exit(code);
}

/// Configuration and usage problems are exit 1; a numerical guarantee
/// that could not be met (norm drift surviving every step halving) is
/// exit 2.
fn classify_error(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ExactError>() {
            if matches!(e, ExactError::NormDrift { .. }) {
                return 2;
            }
        }
    }
    1
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let exec = if cli.common.fast {
        ExecMode::Fast
    } else {
        ExecMode::Deterministic
    };

    match &cli.command {
        Command::Simulate => {
            let config = resolve_config(&cli.common, None)?;
            finish_run(run::run_simulate(
                &config,
                &out_dir(&config),
                exec,
                "simulate",
            )?)
        }
        Command::Analytic => {
            let config = resolve_config(&cli.common, None)?;
            finish_run(run::run_analytic(&config, &out_dir(&config), exec)?)
        }
        Command::Markov => {
            let config = resolve_config(&cli.common, None)?;
            finish_run(run::run_markov(&config, &out_dir(&config), exec)?)
        }
        Command::Modes => {
            let config = resolve_config(&cli.common, None)?;
            finish_run(run::run_modes(&config, &out_dir(&config), exec)?)
        }
        Command::Compare {
            a,
            b,
            interpolate,
            fit_start,
            fit_end,
        } => {
            let table_a = compare::read_trajectory_csv(a)?;
            let table_b = compare::read_trajectory_csv(b)?;
            let mut summary = compare::compare_tables(&table_a, &table_b, *interpolate)?;
            if let (Some(start), Some(end)) = (fit_start, fit_end) {
                compare::attach_rate_comparison(&mut summary, &table_a, &table_b, *start, *end)?;
            }
            print!("{}", compare::render_table(&summary));
            let dir = cli
                .common
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            let path = dir.join("compare.json");
            std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
                .with_context(|| format!("cannot write {}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Preset { name, dump_config } => {
            if *dump_config {
                print!("{}", name.text());
                return Ok(0);
            }
            let config = resolve_config(&cli.common, Some(name.text()))?;
            finish_run(run::run_simulate(
                &config,
                &out_dir(&config),
                exec,
                "preset",
            )?)
        }
    }
}

fn finish_run(outcome: run::RunOutcome) -> Result<i32> {
    if outcome.breach {
        eprintln!(
            "conservation thresholds exceeded; outputs in {} are flagged in manifest.json",
            outcome.out_dir.display()
        );
        Ok(2)
    } else {
        Ok(0)
    }
}

/// Load the config (file or preset text), apply --set overrides, then
/// the dedicated flag overrides.
fn resolve_config(common: &CommonArgs, preset_text: Option<&str>) -> Result<ExperimentConfig> {
    let mut config = match (preset_text, &common.config) {
        (Some(text), None) => load_config_text(text, &common.set)?,
        (Some(_), Some(path)) => {
            // An explicit config wins over the preset body.
            load_config(path, &common.set)?
        }
        (None, Some(path)) => load_config(path, &common.set)?,
        (None, None) => bail!("missing --config PATH (or use a preset)"),
    };
    if let Some(seed) = common.seed {
        config.bath.seed = seed;
    }
    if let Some(method) = common.method {
        config.run.method = method.into();
    }
    if let Some(out) = &common.out {
        config.output.dir = out.display().to_string();
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    PathBuf::from(&config.output.dir)
}
