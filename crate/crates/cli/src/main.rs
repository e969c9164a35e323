//! Command-line surface for the satisfaction-aligned ranking pipeline.

mod commands;
mod config;
mod error;
mod io;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::load_run_config;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "easq",
    version,
    about = "Synthetic short-video environment, satisfaction-aligned ranking model, trainer and evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. --set model.lambda1=0.25 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate interaction and questionnaire logs from the synthetic world.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Emit the hidden true-satisfaction column.
        #[arg(long)]
        debug: bool,
        /// Rate preset: `production` (0.5% exposure, 2% response) or `dense`
        /// (5% / 50%).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Train online over a generated data directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Resume from a checkpoint (equivalent to the uninterrupted run).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the held-out questionnaire window.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train and evaluate all four structural variants across seeds.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seed list (at least 3).
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        #[arg(long)]
        force: bool,
    },
    /// Convergent-validity analysis of a generated data directory.
    ValidateSim {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Grid over one config key, training and evaluating per value and seed.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dotted config key to vary, e.g. model.lambda2.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long)]
        force: bool,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("bad seed `{t}`")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::GenData {
            cfg,
            out,
            force,
            debug,
            preset,
        } => {
            let mut sets = Vec::new();
            match preset.as_deref() {
                Some("dense") => {
                    sets.push("sim.exposure_rate=0.05".to_string());
                    sets.push("sim.response_rate=0.5".to_string());
                }
                Some("production") | None => {}
                Some(other) => {
                    return Err(CliError::Config(format!(
                        "unknown preset `{other}` (expected production or dense)"
                    )))
                }
            }
            sets.extend(cfg.sets.clone());
            let run_cfg = load_run_config(cfg.config.as_deref(), &sets)?;
            commands::gen_data::run(&run_cfg, &out, force, debug)
        }
        Cmd::Train {
            cfg,
            data,
            out,
            force,
            resume,
        } => {
            let run_cfg = load_run_config(cfg.config.as_deref(), &cfg.sets)?;
            commands::train::run(&run_cfg, &data, &out, force, resume.as_deref())
        }
        Cmd::Eval {
            cfg,
            checkpoint,
            data,
            out,
            force,
        } => {
            let run_cfg = load_run_config(cfg.config.as_deref(), &cfg.sets)?;
            commands::eval::run(&run_cfg, &checkpoint, &data, &out, force)
        }
        Cmd::Ablate {
            cfg,
            data,
            out,
            seeds,
            force,
        } => {
            let run_cfg = load_run_config(cfg.config.as_deref(), &cfg.sets)?;
            let seeds = parse_seeds(&seeds)?;
            commands::ablate::run(&run_cfg, &data, &out, &seeds, force)
        }
        Cmd::ValidateSim { data, out, force } => commands::validate_sim::run(&data, &out, force),
        Cmd::Sweep {
            cfg,
            data,
            out,
            param,
            values,
            seeds,
            force,
        } => {
            let run_cfg = load_run_config(cfg.config.as_deref(), &cfg.sets)?;
            let seeds = parse_seeds(&seeds)?;
            let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
            commands::sweep::run(&run_cfg, &data, &out, &param, &values, &seeds, force)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
