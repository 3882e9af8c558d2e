use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qukan_cli::commands::{cmd_ablate, cmd_boundary, cmd_eval, cmd_pretrain, cmd_train};
use qukan_cli::config::{ModelKind, RunConfig};
use qukan_cli::CliResult;

#[derive(Parser)]
#[command(name = "qukan", version, about = "Pre-train, train and evaluate quantum KAN models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the spline superposition circuit
    Pretrain(Common),
    /// Train a model over every configured seed
    Train(Common),
    /// Re-evaluate saved models on their test sets
    Eval(Common),
    /// Write a 200x200 decision-boundary grid for one saved model
    Boundary(Common),
    /// Compare pre-trained, Hadamard-initialised and frozen variants
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Moons noise level
    #[arg(long)]
    noise: Option<f64>,
    /// qukan, fqukan, vqc_angle, vqc_zz, vqc_amplitude, vqc_amplitude_ancillas,
    /// pretrained, hadamard_init or untrained_frozen
    #[arg(long)]
    model: Option<String>,
    /// Experiment output directory (default: $QUKAN_OUTPUT_ROOT/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(e) = self.epochs {
            cfg.optim.epochs = e;
        }
        if let Some(n) = self.noise {
            cfg.data.noise = n;
        }
        if let Some(m) = &self.model {
            cfg.model = ModelKind::parse(m)?;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        cfg.resolve()
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Pretrain(c) => {
            let cfg = c.resolve()?;
            let s = cmd_pretrain(&cfg)?;
            println!(
                "pretrain: TVD {:.4}, MMD {:.3e}, {} iterations -> {}",
                s.tvd,
                s.best_loss,
                s.iterations,
                cfg.output_dir().display()
            );
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let outs = cmd_train(&cfg)?;
            for o in &outs {
                match (o.test.accuracy, o.test.sum_abs) {
                    (Some(a), _) => println!("seed {}: test accuracy {:.4}", o.seed, a),
                    (None, Some(s)) => println!("seed {}: sum-abs avg {:.4} median {:.4}", o.seed, s.avg, s.median),
                    _ => {}
                }
            }
            println!("metrics -> {}", cfg.model_dir().display());
        }
        Command::Eval(c) => {
            let cfg = c.resolve()?;
            print!("{}", cmd_eval(&cfg)?);
        }
        Command::Boundary(c) => {
            let cfg = c.resolve()?;
            let path = cmd_boundary(&cfg, cfg.seeds[0])?;
            println!("boundary -> {}", path.display());
        }
        Command::Ablate(c) => {
            let cfg = c.resolve()?;
            let res = cmd_ablate(&cfg)?;
            let last = res.arms[0].1[0].train_report.accuracy_trace.len() - 1;
            for (i, (k, _)) in res.arms.iter().enumerate() {
                println!("{}: final train accuracy {:.4}", k.name(), res.mean_train_accuracy(i, last));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
