use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypersoc_cli::{run, Command, GradCheckFailed, Overrides, RunConfig};
use hypersoc_core::domain::Scheme;
use hypersoc_core::eval::FeatureSource;

/// Personality classification over social-environment hypergraphs.
#[derive(Parser, Debug)]
#[command(name = "hypersoc", version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splits, initialisation and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the mock language-model client and the hash embedder.
    #[arg(long, global = true)]
    offline: bool,
    /// Directory holding users.jsonl and edges.csv.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// mbti or enneagram.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// enhanced or raw.
    #[arg(long, global = true)]
    features: Option<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Load and validate the dataset.
    Ingest,
    /// Generate narratives for every user.
    Enhance,
    /// Embed the narratives into the feature matrix.
    Embed,
    /// Build the hypergraph.
    Build,
    /// Train a model on the default split.
    Train,
    /// Evaluate the trained model, plus further seeded repetitions.
    Eval,
    /// Evaluate every non-empty combination of hyperedge families.
    Ablate,
    /// Evaluate with growing fractions of the training split.
    Sweep,
    /// Label distributions, cross-tabulations and power-law fits.
    Stats,
    /// Compare analytic and finite-difference gradients.
    Gradcheck,
    /// Run ingest, enhance, embed, build, train, eval and stats in order.
    Pipeline,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<GradCheckFailed>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        offline: cli.offline,
        scheme: cli.scheme.as_deref().map(str::parse::<Scheme>).transpose()?,
        features: cli
            .features
            .as_deref()
            .map(|f| f.parse::<FeatureSource>())
            .transpose()?,
        data_dir: cli.data_dir.clone(),
    };
    let cfg = RunConfig::load(cli.config.as_deref())?.apply(&overrides);
    let commands: Vec<Command> = match cli.command {
        Sub::Ingest => vec![Command::Ingest],
        Sub::Enhance => vec![Command::Enhance],
        Sub::Embed => vec![Command::Embed],
        Sub::Build => vec![Command::Build],
        Sub::Train => vec![Command::Train],
        Sub::Eval => vec![Command::Eval],
        Sub::Ablate => vec![Command::Ablate],
        Sub::Sweep => vec![Command::Sweep],
        Sub::Stats => vec![Command::Stats],
        Sub::Gradcheck => vec![Command::Gradcheck],
        Sub::Pipeline => Command::PIPELINE.to_vec(),
    };
    for c in commands {
        println!("{}", run(c, cfg.clone())?);
    }
    Ok(())
}
