//! `activelab` command-line front end.

use std::path::{Path, PathBuf};

use activelab::classifiers::ClassifierSpec;
use activelab::commands::{self, ConsensusArgs, RunArgs, ScoreArgs};
use activelab::config::ConsensusRule;
use activelab::scoring::{DisagreementForm, ScorerKind};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "activelab", version, about = "Batch active learning with re-labeling by multiple annotators")]
struct Cli {
    /// Default root for output directories.
    #[arg(long, global = true, env = "ACTIVELAB_OUTPUT_ROOT", default_value = "runs")]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config.
    ///
    /// Writes config.toml (echo), results.csv, results.json, summary.csv,
    /// accuracy.svg and manifest.json. Config defaults: seeds = [0],
    /// rounds = 8, batch_size = 60, scorer = "activelab",
    /// mode = "multiannotator", folds = 5, one softmax_regression classifier
    /// (learning_rate 0.1, epochs 300, l2 1e-4), calibration on a 61-point
    /// grid over [0.01, 100], blobs with 300 labeled / 900 pool / 600 test,
    /// K = 4, d = 10, spread 2, and 5 annotators with density 0.3 and noise 0.3.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory [default: <output-root>/<config name>].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's scorer.
        #[arg(long, value_parser = parse_scorer)]
        scorer: Option<ScorerKind>,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Score every example of an annotation table; lowest scores first.
    Score {
        /// `example_id,annotator_id,label` CSV.
        #[arg(long)]
        annotations: PathBuf,
        /// `example_id,p_0,...` CSV, one per model; defines the example set.
        #[arg(long, num_args = 1.., conflicts_with = "features")]
        predictions: Vec<PathBuf>,
        /// `example_id,f_0,...` CSV; a classifier is trained with 5-fold CV.
        #[arg(long, required_unless_present = "predictions")]
        features: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ClassifierArg::SoftmaxRegression)]
        classifier: ClassifierArg,
        #[arg(long, value_parser = parse_scorer, default_value = "activelab")]
        scorer: ScorerKind,
        #[arg(long)]
        num_classes: Option<usize>,
        /// Seed for the random scorers and fold assignment.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Temperature-scale supplied predictions.
        #[arg(long)]
        calibrate: bool,
        /// Score for single-label active learning.
        #[arg(long)]
        single_label: bool,
        #[arg(long, value_enum, default_value_t = FormArg::CrossEntropy)]
        disagreement_form: FormArg,
        /// Output CSV [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Consensus labels and annotator weights for a static table.
    Consensus {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Crowdlab)]
        method: MethodArg,
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long)]
        calibrate: bool,
        /// Output directory [default: <output-root>/consensus].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Chart one or more results files (or run directories).
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Output directory [default: <output-root>/report].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ClassifierArg {
    Knn,
    SoftmaxRegression,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FormArg {
    CrossEntropy,
    Product,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    Crowdlab,
    MajorityVote,
}

fn parse_scorer(s: &str) -> Result<ScorerKind, String> {
    s.parse().map_err(|e: activelab::Error| e.to_string())
}

fn default_dir(root: &Path, name: &str) -> PathBuf {
    root.join(name)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            scorer,
            force,
        } => {
            let stem = config
                .file_stem()
                .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
            let out = out.unwrap_or_else(|| default_dir(&cli.output_root, &stem));
            let outputs = commands::cmd_run(&RunArgs {
                config,
                out: out.clone(),
                seed,
                scorer,
                force,
            })?;
            print!("{}", outputs.summary);
            println!("wrote {} files to {}", outputs.files.len(), out.display());
        }
        Command::Score {
            annotations,
            predictions,
            features,
            classifier,
            scorer,
            num_classes,
            seed,
            calibrate,
            single_label,
            disagreement_form,
            out,
            force,
        } => {
            let classifier = match classifier {
                ClassifierArg::Knn => ClassifierSpec::Knn { k: 5 },
                ClassifierArg::SoftmaxRegression => ClassifierSpec::default(),
            };
            let disagreement_form = match disagreement_form {
                FormArg::CrossEntropy => DisagreementForm::CrossEntropy,
                FormArg::Product => DisagreementForm::Product,
            };
            let csv = commands::cmd_score(&ScoreArgs {
                annotations,
                predictions,
                features,
                classifier,
                scorer,
                num_classes,
                seed,
                calibrate,
                single_label,
                disagreement_form,
            })?;
            match out {
                Some(path) => commands::write_score_output(&csv, &path, force)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Consensus {
            annotations,
            predictions,
            method,
            num_classes,
            calibrate,
            out,
            force,
        } => {
            let method = match method {
                MethodArg::Crowdlab => ConsensusRule::Crowdlab,
                MethodArg::MajorityVote => ConsensusRule::MajorityVote,
            };
            let output = commands::cmd_consensus(&ConsensusArgs {
                annotations,
                predictions,
                method,
                num_classes,
                calibrate,
            })?;
            let out = out.unwrap_or_else(|| default_dir(&cli.output_root, "consensus"));
            commands::write_consensus_output(&output, &out, force)?;
            println!("wrote consensus to {}", out.display());
        }
        Command::Report { results, out, force } => {
            let out = out.unwrap_or_else(|| default_dir(&cli.output_root, "report"));
            let summary = commands::cmd_report(&results, &out, force)?;
            print!("{summary}");
            println!("wrote chart to {}", out.display());
        }
    }
    Ok(())
}
