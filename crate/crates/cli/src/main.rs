use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use emoint::pipeline::{
    cmd_evaluate, cmd_extract_features, cmd_predict, cmd_preprocess, cmd_train_baseline, cmd_train_charlm,
    cmd_train_word, cmd_tune, PipelineConfig,
};
use emoint::{Error, Result, SplitName};

/// Emotion-intensity regression for tweets.
#[derive(Debug, Parser)]
#[command(name = "emoint", version)]
struct Cli {
    /// Pipeline config file (flat `key = value` text).
    #[arg(long, global = true, env = "EMOINT_CONFIG")]
    config: Option<PathBuf>,

    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-emotion training and prediction.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Dev,
    Test,
}

impl From<Split> for SplitName {
    fn from(s: Split) -> Self {
        match s {
            Split::Train => SplitName::Train,
            Split::Dev => SplitName::Dev,
            Split::Test => SplitName::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize the tweet text of a dataset file.
    Preprocess { input: PathBuf, output: PathBuf },
    /// Train the character LM and its per-emotion SVRs.
    TrainCharlm,
    /// Train the per-emotion word-level regressors.
    TrainWord,
    /// Train the per-emotion lexicon/n-gram SVRs.
    TrainBaseline,
    /// Dump character-LM features for one split.
    ExtractFeatures {
        #[arg(long, value_enum, default_value = "dev")]
        split: Split,
    },
    /// Grid-search the ensemble weights on the dev split.
    Tune,
    /// Write ensemble predictions for a dataset file.
    Predict {
        /// Defaults to the config's test split.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Defaults to weights.txt in the output directory.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Score predictions against gold intensities.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Where report.txt and report.kv go; defaults to the predictions' directory.
        #[arg(long)]
        report_dir: Option<PathBuf>,
        #[arg(long, default_value = "ensemble")]
        name: String,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::MissingInput("no config given (use --config or EMOINT_CONFIG)".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    log::debug!("config {}: {cfg:?}", path.display());
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Preprocess { input, output } => {
            let n = cmd_preprocess(input, output)?;
            println!("{n} records written to {}", output.display());
        }
        Command::TrainCharlm => cmd_train_charlm(&load_config(cli)?)?,
        Command::TrainWord => cmd_train_word(&load_config(cli)?)?,
        Command::TrainBaseline => cmd_train_baseline(&load_config(cli)?)?,
        Command::ExtractFeatures { split } => {
            let path = cmd_extract_features(&load_config(cli)?, (*split).into())?;
            println!("{}", path.display());
        }
        Command::Tune => {
            let result = cmd_tune(&load_config(cli)?)?;
            print!("{}", result.weights.to_text());
            println!("dev_avg_pearson = {}", result.avg_pearson);
        }
        Command::Predict { input, output, weights } => {
            let cfg = load_config(cli)?;
            let input = match input {
                Some(p) => p.clone(),
                None => cfg
                    .test
                    .clone()
                    .ok_or_else(|| Error::MissingInput("no --input and no `test` in the config".into()))?,
            };
            let n = cmd_predict(&cfg, &input, output, weights.as_deref())?;
            println!("{n} predictions written to {}", output.display());
        }
        Command::Evaluate {
            predictions,
            gold,
            report_dir,
            name,
        } => {
            let dir = report_dir
                .clone()
                .unwrap_or_else(|| predictions.parent().unwrap_or(Path::new(".")).to_path_buf());
            let report = cmd_evaluate(predictions, gold, &dir, name)?;
            print!("{}", report.to_table(name));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.code());
            ExitCode::FAILURE
        }
    }
}
