//! `mechnli`: batch stages for building adversarial inference datasets.
//!
//! Exit codes: 0 success, 1 usage, 2 input schema error, 3 invariant violation.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Schema(String),
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Schema(m) => write!(f, "schema error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mechnli", version, about = "Build adversarial NLI datasets from annotated abstracts")]
#[command(after_help = config::help_table())]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Flat key = value config file, applied before any flag
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base seed [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core [default: 0]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Published decoder hyperparameters (beam 50)
    #[arg(long, global = true, conflicts_with = "desk_config")]
    paper_config: bool,
    /// Narrow decoder for desk-scale runs (beam 8) [default]
    #[arg(long, global = true)]
    desk_config: bool,
    /// Upper bound on GEN quality [default: 0.45]
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Lower bound on GEN-ND similarity [default: 0.9]
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Cap rule-based train categories [default: off]
    #[arg(long, global = true)]
    balanced: bool,
    /// Skip malformed corpus records [default: off]
    #[arg(long, global = true)]
    lenient: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split abstracts into premise and marked conclusion
    Extract {
        corpus: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Apply the rule-based perturbations to extracted pairs
    Perturb {
        extracted: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the bundled n-gram generator on extracted pairs
    TrainLm {
        extracted: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Generate constrained and unconstrained candidates
    Decode {
        extracted: PathBuf,
        #[arg(long, value_name = "FILE")]
        lm: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Keep qualifying candidates and merge them into groups
    Filter {
        extracted: PathBuf,
        candidates: PathBuf,
        #[arg(long, value_name = "FILE")]
        groups: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Split groups and emit train, dev and test instances
    Assemble {
        groups: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Count instances of an assembled dataset directory
    Stats {
        dataset: PathBuf,
        /// Also report how many kinds apply per group
        #[arg(long, value_name = "FILE")]
        groups: Option<PathBuf>,
        #[arg(short, long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Score classifier predictions against instances
    Eval {
        instances: PathBuf,
        predictions: PathBuf,
        #[arg(short, long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn resolve(g: &Global) -> Result<Config, CliError> {
    let mut cfg = Config::default();
    if let Some(p) = &g.config {
        cfg.apply_file(p)?;
    }
    let flags: [(&str, Option<String>); 4] = [
        ("seed", g.seed.map(|x| x.to_string())),
        ("jobs", g.jobs.map(|x| x.to_string())),
        ("lambda", g.lambda.map(|x| x.to_string())),
        ("delta", g.delta.map(|x| x.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if g.paper_config {
        cfg.set("decoder", "paper")?;
    }
    if g.desk_config {
        cfg.set("decoder", "desk")?;
    }
    if g.balanced {
        cfg.set("balanced", "true")?;
    }
    if g.lenient {
        cfg.set("lenient", "true")?;
    }
    for pair in &g.set {
        cfg.apply_override(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.global)?;
    match cli.command {
        Command::Extract { corpus, out } => commands::extract(&cfg, &corpus, &out),
        Command::Perturb { extracted, out } => commands::perturb(&cfg, &extracted, &out),
        Command::TrainLm { extracted, out } => commands::train_lm(&cfg, &extracted, &out),
        Command::Decode { extracted, lm, out } => commands::decode(&cfg, &extracted, &lm, &out),
        Command::Filter {
            extracted,
            candidates,
            groups,
            out,
        } => commands::filter(&cfg, &extracted, &candidates, &groups, &out),
        Command::Assemble { groups, out } => commands::assemble(&cfg, &groups, &out),
        Command::Stats { dataset, groups, out } => commands::stats(&cfg, &dataset, groups.as_deref(), out.as_deref()),
        Command::Eval {
            instances,
            predictions,
            out,
        } => commands::eval(&cfg, &instances, &predictions, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mechnli: {e}");
            ExitCode::from(e.code())
        }
    }
}
