mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "aupose", version)]
#[command(about = "Multiview facial action unit baseline: synthesis, training, prediction and scoring")]
struct Cli {
    /// Run configuration (JSON)
    #[arg(long, short, global = true, default_value = "aupose.json")]
    config: PathBuf,

    /// Override the configured output directory
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Validate the configuration and print the plan without writing anything
    #[arg(long, global = true)]
    dry_run: bool,

    /// Worker threads (default: all cores)
    #[arg(long, short, global = true)]
    jobs: Option<usize>,

    /// Log progress at info level (RUST_LOG overrides)
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Generate the synthetic multiview dataset and its manifests
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the point-distribution shape model on the training partition
    TrainShape,
    /// Write per-frame feature matrices for the evaluated partitions
    Extract,
    /// Train the occurrence and intensity models
    Train {
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated view ids used for training
        #[arg(long, value_delimiter = ',')]
        training_views: Option<Vec<u8>>,
    },
    /// Predict every sequence of the evaluated partitions
    Predict,
    /// Score predictions against ground truth
    Evaluate,
    /// Render Markdown and CSV reports from scores
    Report,
    /// Run every step from synthesis to reports
    Run,
}

fn apply_overrides(config: &mut RunConfig, cli: &Cli) {
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    match &cli.command {
        Command::Synth { seed: Some(seed) } => config.synth.seed = *seed,
        Command::Train {
            seed,
            training_views,
        } => {
            if let Some(seed) = seed {
                config.pipeline.seed = *seed;
            }
            if let Some(views) = training_views {
                config.pipeline.training_views = views.clone();
            }
        }
        _ => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }

    let mut config = match RunConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    apply_overrides(&mut config, &cli);

    let mut violations = config.violations();
    violations.extend(commands::missing_inputs(&cli.command, &config));
    if !violations.is_empty() {
        eprintln!("error: invalid configuration ({} problem(s)):", violations.len());
        for v in &violations {
            eprintln!("  - {v}");
        }
        return ExitCode::from(2);
    }

    if cli.dry_run {
        print!("{}", commands::plan(&cli.command, &config));
        return ExitCode::SUCCESS;
    }

    match commands::execute(&cli.command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}
