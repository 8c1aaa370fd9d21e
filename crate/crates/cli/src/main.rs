//! `sinegate`: reproducible simulation runs for the sine-gated detector and
//! its QKD link budget.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 a model queried
//! outside its calibrated range.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use sinegate_core::config::{load_config, Config};

use commands::Ctx;
use report::{Format, OutputDir, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "sinegate", version, about = "Sine-gated SPAD simulator and COW QKD link budget")]
struct Cli {
    /// JSON configuration; omitted fields take the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "sinegate-out")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
enum Command {
    /// Gate, feedthrough, avalanche and filtered traces with spectra and the filter self-test.
    ChainDemo(commands::ChainDemoArgs),
    /// Detection efficiency versus DC bias.
    SweepBias(commands::SweepBiasArgs),
    /// Detection efficiency versus laser-to-gate delay.
    SweepDelay(commands::SweepDelayArgs),
    /// Dark-count probability versus temperature.
    SweepTemp(commands::SweepTempArgs),
    /// Timing histogram, jitter and inter-detection correlations.
    Tcspc(commands::TcspcArgs),
    /// Link budget versus photons per bit and versus fiber loss.
    Qkd(commands::QkdArgs),
    /// Link budget versus detector temperature.
    QkdTemp(commands::QkdTempArgs),
    /// Repeated constant-parameter link segments.
    Stability(commands::StabilityArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ChainDemo(_) => "chain-demo",
            Command::SweepBias(_) => "sweep-bias",
            Command::SweepDelay(_) => "sweep-delay",
            Command::SweepTemp(_) => "sweep-temp",
            Command::Tcspc(_) => "tcspc",
            Command::Qkd(_) => "qkd",
            Command::QkdTemp(_) => "qkd-temp",
            Command::Stability(_) => "stability",
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => load_config(path).with_context(|| format!("loading config {}", path.display()))?,
        None => Config::default(),
    };
    let mut out = OutputDir::create(&cli.out, cli.format)?;
    let mut ctx = Ctx {
        cfg: &cfg,
        seed: cli.seed,
        out: &mut out,
        notes: Vec::new(),
    };
    match &cli.command {
        Command::ChainDemo(a) => commands::chain_demo(&mut ctx, a)?,
        Command::SweepBias(a) => commands::sweep_bias(&mut ctx, a)?,
        Command::SweepDelay(a) => commands::sweep_delay(&mut ctx, a)?,
        Command::SweepTemp(a) => commands::sweep_temp(&mut ctx, a)?,
        Command::Tcspc(a) => commands::tcspc(&mut ctx, a)?,
        Command::Qkd(a) => commands::qkd(&mut ctx, a)?,
        Command::QkdTemp(a) => commands::qkd_temp(&mut ctx, a)?,
        Command::Stability(a) => commands::stability(&mut ctx, a)?,
    }
    let notes = std::mem::take(&mut ctx.notes);
    let manifest = RunManifest {
        tool: "sinegate",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        master_seed: cli.seed,
        output_dir: cli.out.display().to_string(),
        format: cli.format,
        options: serde_json::to_value(&cli.command)?,
        notes,
        resolved_config: serde_json::to_value(&cfg.document)?,
        emitted_files: out.files(),
    };
    manifest.write(out.dir())?;
    for f in out.files() {
        println!("{}", out.dir().join(&f.name).display());
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let model_range = err
        .chain()
        .filter_map(|e| e.downcast_ref::<sinegate_core::Error>())
        .any(|e| e.is_model_range());
    if model_range {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
