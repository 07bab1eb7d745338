use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use optreg_cli::{finalize, parse_bound, read_run_config, run, CliError, Command, ConfigPatch, ControllerChoice};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    Lqr,
    Mintime,
    Simulate,
    Compare,
    Sweep,
    Synth2d,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ControllerArg {
    None,
    Lqr,
    Bang,
    Synth2d,
}

/// Optimal regulation of structural vibration under bounded control.
#[derive(Debug, Parser)]
#[command(name = "optreg", version)]
struct Args {
    /// Command to run; may instead come from the config file.
    command: Option<CommandArg>,

    /// Run config (JSON). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Plant or structural model file (JSON).
    #[arg(long)]
    input: Option<PathBuf>,

    /// State weights, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    rho: Option<Vec<f64>>,

    /// Actuator bounds, comma separated; `inf` means unsaturated.
    #[arg(long, value_delimiter = ',', num_args = 1.., value_parser = parse_bound)]
    bound: Option<Vec<f64>>,

    #[arg(long)]
    horizon: Option<f64>,

    #[arg(long)]
    dt: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and multi-start searches.
    #[arg(long)]
    jobs: Option<usize>,

    /// Controller for `simulate`.
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,

    /// Write every k-th sample to trajectory CSVs.
    #[arg(long)]
    csv_stride: Option<usize>,

    /// Multi-start restarts for the minimum-time search.
    #[arg(long)]
    restarts: Option<usize>,
}

impl Args {
    fn patch(&self) -> ConfigPatch {
        ConfigPatch {
            input: self.input.clone(),
            command: self.command.map(|c| match c {
                CommandArg::Lqr => Command::Lqr,
                CommandArg::Mintime => Command::Mintime,
                CommandArg::Simulate => Command::Simulate,
                CommandArg::Compare => Command::Compare,
                CommandArg::Sweep => Command::Sweep,
                CommandArg::Synth2d => Command::Synth2d,
            }),
            rho: self.rho.clone(),
            bounds: self.bound.clone(),
            horizon: self.horizon,
            dt: self.dt,
            seed: self.seed,
            out: self.out.clone(),
            jobs: self.jobs,
            controller: self.controller.map(|c| match c {
                ControllerArg::None => ControllerChoice::None,
                ControllerArg::Lqr => ControllerChoice::Lqr,
                ControllerArg::Bang => ControllerChoice::Bang,
                ControllerArg::Synth2d => ControllerChoice::Synth2d,
            }),
            csv_stride: self.csv_stride,
            restarts: self.restarts,
        }
    }
}

fn main_inner(args: &Args) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => read_run_config(path)?,
        None => ConfigPatch::default(),
    };
    let cfg = finalize(file.merge(args.patch()))?;
    let summary = run(&cfg)?;
    print!("{}", summary.report);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match main_inner(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
