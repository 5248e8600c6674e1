//! `mtst`: data preparation, training, self-training, evaluation and
//! reporting over a single resolved run config.

mod artifacts;
mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::Overrides;

/// An error caused by the invocation rather than by the program.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UserError(pub String);

#[derive(Args, Clone)]
struct Common {
    /// TOML run config; every key has a default.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.lr=0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Global seed; also used for training and the baseline.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and validate the corpus and train the vocabulary.
    Preprocess,
    /// Supervised training on the labeled split.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Continue from the run directory's last checkpoint.
        #[arg(long)]
        resume: bool,
        /// Stop after this many completed epochs (resumable).
        #[arg(long)]
        stop_after_epochs: Option<usize>,
    },
    /// Initial fit followed by confidence-thresholded pseudo-labeling.
    Selftrain {
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        tau_init: Option<f64>,
        #[arg(long)]
        tau_min: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// `main` or `joint`.
        #[arg(long)]
        rule: Option<Rule>,
    },
    /// Score a trained model on a held-out split.
    Evaluate {
        /// Run directory holding config.toml, vocab.json and model.ckpt.
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint other than the run's final model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, conflicts_with = "sweep")]
        threshold: Option<f64>,
        /// Also write precision/recall/F1 over the config's threshold grid.
        #[arg(long)]
        sweep: bool,
    },
    /// TF-IDF plus logistic regression.
    Baseline,
    /// Encoder-only, no self-training, no multi-label and full runs.
    Ablate,
    /// Aggregate metrics from run directories into one table.
    Report {
        dirs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy)]
enum Rule {
    Main,
    Joint,
}

impl FromStr for Rule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "main" | "main_confidence" => Ok(Rule::Main),
            "joint" | "joint_confidence" => Ok(Rule::Joint),
            _ => Err(format!("unknown rule `{s}` (expected main or joint)")),
        }
    }
}

#[derive(Parser)]
#[command(name = "mtst", version, about = "Multi-task self-training for harmful-content classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn overrides(common: &Common) -> Result<Overrides> {
    let mut o = Overrides::default();
    for a in &common.set {
        o.push_assignment(a)?;
    }
    if let Some(seed) = common.seed {
        for key in ["seed", "train.seed", "baseline.lr.seed"] {
            o.push(key, seed.to_string())?;
        }
    }
    if let Some(out) = &common.out {
        o.push("output_dir", toml::Value::String(out.display().to_string()).to_string())?;
    }
    Ok(o)
}

fn push_opt<T: ToString>(o: &mut Overrides, key: &str, v: Option<T>) -> Result<()> {
    match v {
        Some(v) => o.push(key, v.to_string()),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut o = overrides(&cli.common)?;
    let cfg_file = cli.common.config.as_deref();
    match cli.command {
        Command::Preprocess => commands::preprocess(&config::resolve(cfg_file, &o)?),
        Command::Train {
            epochs,
            lr,
            batch_size,
            resume,
            stop_after_epochs,
        } => {
            push_opt(&mut o, "train.epochs", epochs)?;
            push_opt(&mut o, "train.lr", lr)?;
            push_opt(&mut o, "train.batch_size", batch_size)?;
            commands::train(&config::resolve(cfg_file, &o)?, resume, stop_after_epochs)
        }
        Command::Selftrain {
            iterations,
            tau_init,
            tau_min,
            alpha,
            rule,
        } => {
            push_opt(&mut o, "selftrain.iterations", iterations)?;
            push_opt(&mut o, "selftrain.tau_init", tau_init)?;
            push_opt(&mut o, "selftrain.tau_min", tau_min)?;
            push_opt(&mut o, "selftrain.alpha", alpha)?;
            let rule = rule.map(|r| match r {
                Rule::Main => "\"main_confidence\"",
                Rule::Joint => "\"joint_confidence\"",
            });
            push_opt(&mut o, "selftrain.acceptance_rule", rule)?;
            commands::selftrain(&config::resolve(cfg_file, &o)?)
        }
        Command::Evaluate {
            run,
            model,
            split,
            threshold,
            sweep,
        } => {
            if threshold.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
                anyhow::bail!(UserError("--threshold must lie in [0, 1]".into()));
            }
            commands::evaluate(&commands::EvalArgs {
                run_dir: run,
                model,
                split,
                threshold,
                sweep,
                out: cli.common.out,
            })
        }
        Command::Baseline => commands::baseline(&config::resolve(cfg_file, &o)?),
        Command::Ablate => commands::ablate(&config::resolve(cfg_file, &o)?),
        Command::Report { dirs } => commands::report(&dirs, cli.common.out.as_deref()),
    }
}

/// 1 for problems with the invocation, config or inputs; 2 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    use mtst_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UserError>()
            || cause.is::<std::io::Error>()
            || cause.is::<toml::de::Error>()
            || cause.is::<csv::Error>()
            || cause.is::<serde_json::Error>()
        {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Shape(_) | E::NonFinite(_) | E::CorruptSequence { .. } | E::LengthMismatch(_) => 2,
                _ => 1,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
