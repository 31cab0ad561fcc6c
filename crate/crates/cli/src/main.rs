use std::path::PathBuf;
use std::process::ExitCode;

use bscahn_cli::config::{Experiment, ExperimentConfig};
use bscahn_cli::output::OutputDir;
use bscahn_cli::{run, CliError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bscahn", version, about = "Bulk-surface Cahn-Hilliard experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh refinement study against the manufactured solution.
    ConvergenceSpace(RunArgs),
    /// Step-size study on a fixed mesh.
    ConvergenceTime(RunArgs),
    /// Relaxation of an elliptic droplet attached to the wall.
    Droplet(RunArgs),
    /// Spinodal decomposition from random data.
    RandomIc(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the mesh and the assembled matrices.
    #[arg(long)]
    dump_matrices: bool,
}

fn load(args: &RunArgs, kind: Experiment) -> Result<(ExperimentConfig, OutputDir), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    if cfg.experiment != kind {
        return Err(CliError::Config(format!(
            "config is for {}, not {}",
            cfg.experiment.name(),
            kind.name()
        )));
    }
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, OutputDir::create(dir)?))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (args, kind) = match &cli.command {
        Command::ConvergenceSpace(a) => (a, Experiment::ConvergenceSpace),
        Command::ConvergenceTime(a) => (a, Experiment::ConvergenceTime),
        Command::Droplet(a) => (a, Experiment::Droplet),
        Command::RandomIc(a) => (a, Experiment::RandomIc),
    };
    let (cfg, out) = load(args, kind)?;
    match kind {
        Experiment::ConvergenceSpace | Experiment::ConvergenceTime => {
            let study = if kind == Experiment::ConvergenceSpace {
                run::convergence_space(&cfg)?
            } else {
                run::convergence_time(&cfg)?
            };
            for n in &study.notes {
                eprintln!("warning: {n}");
            }
            out.study(&cfg, &study, args.dump_matrices)?;
            print!("{}", study.table.summary());
        }
        Experiment::Droplet | Experiment::RandomIc => {
            let d = if kind == Experiment::Droplet {
                run::droplet(&cfg)?
            } else {
                run::random_ic(&cfg)?
            };
            for n in &d.notes {
                eprintln!("warning: {n}");
            }
            let s = out.dynamics(&cfg, &d, args.dump_matrices)?;
            println!(
                "steps {}  t {:.6e}  energy {:.6e} -> {:.6e}  mean u {:.6}  contact length {:.6}  trace variance {:.6e}",
                s.steps, s.t_final, s.energy_initial, s.energy_final, s.mean_u_initial, s.contact_length_final, s.trace_variance_final
            );
        }
    }
    println!("wrote {}", out.path().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
