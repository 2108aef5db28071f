use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hrere::commands::{cmd_eval, cmd_gen_data, cmd_plot, cmd_pretrain, cmd_train, AppConfig, Overrides};
use hrere::training::Variant;

#[derive(Parser)]
#[command(name = "hrere", version, about = "Joint relation extraction with KB embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Combination weight of the language distribution at inference.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Directory holding all inputs and outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic KB, corpus and datasets.
    GenData,
    /// Pretrain the KB embedding on the KB minus test pairs.
    PretrainKbe,
    /// Train the configured variant.
    Train,
    /// Held-out evaluation of trained models.
    Eval,
    /// Render a precision/recall curve as SVG.
    Plot,
}

fn run(cli: &Cli) -> hrere::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        variant: cli.variant,
        alpha: cli.alpha,
    })?;
    match cli.command {
        Command::GenData => cmd_gen_data(&cfg, &cli.out),
        Command::PretrainKbe => cmd_pretrain(&cfg, &cli.out),
        Command::Train => cmd_train(&cfg, &cli.out),
        Command::Eval => cmd_eval(&cfg, cli.alpha, &cli.out),
        Command::Plot => cmd_plot(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HRERE_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
