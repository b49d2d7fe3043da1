use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use poirec::commands::{cmd_ablate, cmd_eval, cmd_gen, cmd_gradcheck, cmd_train};
use poirec::{CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "poirec", version, about = "Knowledge-graph POI recommendation with counterfactual debiasing")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (same as `--set out_dir=...`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic city: KG, check-ins and ground truth.
    Gen,
    /// Train and write the best checkpoint plus an epoch log.
    Train,
    /// Evaluate a checkpoint on the test split.
    Eval {
        /// tie, te or y_up
        #[arg(long)]
        scorer: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and compare the full model against its two ablations.
    Ablate,
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
}

fn config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", out.display()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    match &cli.command {
        Command::Eval { scorer, checkpoint } => {
            if let Some(s) = scorer {
                overrides.push(format!("scorer={s}"));
            }
            if let Some(c) = checkpoint {
                overrides.push(format!("checkpoint={}", c.display()));
            }
        }
        _ => {}
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config(&cli)?;
    match cli.command {
        Command::Gen => {
            let out = cmd_gen(&cfg)?;
            println!("kg\t{}", out.kg.display());
            println!("checkins\t{}", out.checkins.display());
            println!("truth\t{}", out.truth.display());
            println!("triplets\tgeographical={} functional={}", out.tally.geographical, out.tally.functional);
        }
        Command::Train => {
            let out = cmd_train(&cfg)?;
            println!("checkpoint\t{}", out.checkpoint.display());
            println!("log\t{}", out.log.display());
            println!("best_epoch\t{}\tval_recall@20\t{}", out.outcome.best_epoch, out.outcome.best_metric);
        }
        Command::Eval { .. } => {
            let out = cmd_eval(&cfg)?;
            println!("{}", out.record.line());
        }
        Command::Ablate => {
            let out = cmd_ablate(&cfg)?;
            print!("{}", out.table);
        }
        Command::Gradcheck { corrupt } => {
            let out = cmd_gradcheck(&cfg, corrupt.as_deref())?;
            print!("{}", out.text);
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", error_line("usage", first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
