use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use greenonet::runner::{
    emit_green_slice, evaluate_checkpoint, parse_problem, run_experiment, run_reference,
    ExperimentConfig,
};
use greenonet::{Error, Result};

#[derive(Parser)]
#[command(name = "greenonet", version, about = "Physics-informed operator networks for the wave equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the data sets and train the configured architectures.
    Train {
        /// TOML experiment file; overlaid on the preset when both are given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Print one line per epoch.
        #[arg(long)]
        verbose: bool,
    },
    /// Compare a checkpoint with the reference solution for u₀ = (1 − x²)^k.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the learned kernel G(x, t, ξ).
    GreenSlice {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated coordinates; repeat for several ξ.
        #[arg(long, required = true)]
        xi: Vec<String>,
        /// Comma-separated times.
        #[arg(long)]
        times: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the reference solution on the evaluation grid.
    Reference {
        /// exp1, exp3, homogeneous[:c=C], heaviside[:x0=X], 2d[:c=C].
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{what}: {v:?} is not a number")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            preset,
            out,
            verbose,
        } => {
            let cfg = match (&config, &preset) {
                (Some(path), p) => ExperimentConfig::load(path, p.as_deref())?,
                (None, Some(p)) => greenonet::runner::preset(p)?,
                (None, None) => {
                    return Err(Error::Config("train needs --config, --preset or both".into()))
                }
            };
            let summary = run_experiment(&cfg, &out, |arch, r| {
                if verbose || r.test_loss_total.is_some() {
                    eprintln!(
                        "{} epoch {} loss {:.6e}{}",
                        arch.name(),
                        r.epoch,
                        r.loss_total,
                        r.test_loss_total.map(|t| format!(" test {t:.6e}")).unwrap_or_default()
                    );
                }
            })?;
            for run in &summary.runs {
                println!(
                    "{}: {} after {} epochs, final loss {}",
                    run.architecture.name(),
                    run.status,
                    run.epochs_run,
                    run.final_loss_total.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into())
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::Evaluate {
            checkpoint,
            k,
            t,
            out,
        } => {
            let report = evaluate_checkpoint(&checkpoint, k, t, &out)?;
            println!("max pointwise error {:.16e}", report.max_error);
        }
        Command::GreenSlice {
            checkpoint,
            xi,
            times,
            out,
        } => {
            let xis = xi
                .iter()
                .map(|x| parse_list(x, "--xi"))
                .collect::<Result<Vec<_>>>()?;
            let times = parse_list(&times, "--times")?;
            for path in emit_green_slice(&checkpoint, &xis, &times, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Reference { problem, k, t, out } => {
            let problem = parse_problem(&problem)?;
            let (path, peak) = run_reference(&problem, k, t, &out)?;
            println!("{}", path.display());
            println!("max |u_ref| {peak:.16e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
