//! Experiment configuration (TOML).
//!
//! Every key has a default, so an empty file is a valid config. Errors carry
//! the line of the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::CalibrationConfig;
use crate::classifiers::{ClassifierSpec, DEFAULT_FOLDS};
use crate::error::{Error, Result};
use crate::scoring::{DisagreementForm, ScorerKind, ScoringOptions};
use crate::simulation::{AnnotatorConfig, PoolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Candidates are all examples; re-labeling competes with new labels.
    #[default]
    Multiannotator,
    /// Candidates are unlabeled examples only.
    SingleLabel,
    /// No unlabeled pool; every acquisition is a re-label.
    LabelCleaning,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Multiannotator => "multiannotator",
            Mode::SingleLabel => "single_label",
            Mode::LabelCleaning => "label_cleaning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusRule {
    Crowdlab,
    MajorityVote,
}

impl ConsensusRule {
    pub fn name(self) -> &'static str {
        match self {
            ConsensusRule::Crowdlab => "crowdlab",
            ConsensusRule::MajorityVote => "majority_vote",
        }
    }
}

impl std::str::FromStr for ConsensusRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crowdlab" => Ok(ConsensusRule::Crowdlab),
            "majority_vote" => Ok(ConsensusRule::MajorityVote),
            _ => Err(Error::Config(format!(
                "unknown consensus method `{s}`; expected one of: crowdlab | majority_vote"
            ))),
        }
    }
}

/// Real-data inputs; paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileData {
    /// `example_id,f_0,…` for every annotatable example.
    pub features: PathBuf,
    /// Initial `example_id,annotator_id,label` table.
    pub annotations: PathBuf,
    pub test_features: PathBuf,
    /// `example_id,label` ground truth for the test set.
    pub test_labels: PathBuf,
    /// `example_id,label` ground truth for simulating new annotators.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Pre-recorded annotations handed out as examples are selected.
    #[serde(default)]
    pub recorded: Option<PathBuf>,
    /// Inferred from the labels when absent.
    #[serde(default)]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub disagreement_form: DisagreementForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Write `accuracy.svg` next to the results.
    pub chart: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { chart: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub batch_size: usize,
    pub scorer: ScorerKind,
    pub mode: Mode,
    /// Defaults to CROWDLAB for ActiveLab scorers and majority vote otherwise.
    pub consensus: Option<ConsensusRule>,
    pub folds: usize,
    pub data: PoolSpec,
    pub files: Option<FileData>,
    pub annotators: AnnotatorConfig,
    pub classifiers: Vec<ClassifierSpec>,
    pub calibration: CalibrationConfig,
    pub scoring: ScoringConfig,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            rounds: 8,
            batch_size: 60,
            scorer: ScorerKind::Activelab,
            mode: Mode::Multiannotator,
            consensus: None,
            folds: DEFAULT_FOLDS,
            data: PoolSpec::default(),
            files: None,
            annotators: AnnotatorConfig::default(),
            classifiers: vec![ClassifierSpec::default()],
            calibration: CalibrationConfig::default(),
            scoring: ScoringConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// A validation failure and the config key it belongs to.
struct Invalid {
    key: &'static str,
    message: String,
}

fn invalid(key: &'static str, message: impl Into<String>) -> Invalid {
    Invalid {
        key,
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn consensus_rule(&self) -> ConsensusRule {
        self.consensus.unwrap_or(
            if self.scorer.is_activelab() && self.scorer != ScorerKind::ActivelabSingle && self.mode != Mode::SingleLabel {
                ConsensusRule::Crowdlab
            } else {
                ConsensusRule::MajorityVote
            },
        )
    }

    pub fn scoring_options(&self) -> ScoringOptions {
        ScoringOptions {
            disagreement_form: self.scoring.disagreement_form,
            single_label: self.mode == Mode::SingleLabel,
        }
    }

    /// Joined classifier names, e.g. `knn+softmax_regression`.
    pub fn classifier_label(&self) -> String {
        self.classifiers.iter().map(|c| c.name()).collect::<Vec<_>>().join("+")
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| Error::Config(format!("{}: {}", e.key, e.message)))
    }

    fn check(&self) -> std::result::Result<(), Invalid> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("seeds", "seeds must be distinct"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "batch_size must be at least 1"));
        }
        if self.folds < 2 {
            return Err(invalid("folds", "folds must be at least 2"));
        }
        if self.classifiers.is_empty() {
            return Err(invalid("classifiers", "at least one classifier is required"));
        }
        for c in &self.classifiers {
            c.validate().map_err(|e| invalid("classifiers", e.to_string()))?;
        }
        if self.classifiers.len() < self.scorer.min_models() {
            return Err(invalid(
                "scorer",
                format!(
                    "scorer `{}` needs at least {} classifiers, config lists {}",
                    self.scorer,
                    self.scorer.min_models(),
                    self.classifiers.len()
                ),
            ));
        }
        self.calibration.validate().map_err(|e| invalid("calibration", e.to_string()))?;
        self.annotators.validate().map_err(|e| invalid("annotators", e.to_string()))?;
        match &self.files {
            None => {
                self.data.validate().map_err(|e| invalid("data", e.to_string()))?;
                if self.mode == Mode::LabelCleaning && self.data.num_pool != 0 {
                    return Err(invalid("mode", "label_cleaning mode requires data.num_pool = 0"));
                }
                let min_density = 1.0 / self.annotators.initial_count as f64;
                if self.annotators.density + 1e-12 < min_density {
                    return Err(invalid(
                        "density",
                        format!("density must be at least 1/initial_count = {min_density}"),
                    ));
                }
            }
            Some(files) => {
                if self.data != PoolSpec::default() {
                    return Err(invalid("files", "[data] and [files] are mutually exclusive"));
                }
                if files.truth.is_some() == files.recorded.is_some() && self.rounds > 0 {
                    return Err(invalid(
                        "files",
                        "exactly one of files.truth or files.recorded is needed to collect new labels",
                    ));
                }
                if files.num_classes.is_some_and(|k| k < 2) {
                    return Err(invalid("num_classes", "num_classes must be at least 2"));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates; `origin` names the source in diagnostics.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        config.check().map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: key_line(text, e.key).unwrap_or(0),
            message: e.message,
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical TOML echo, hex encoded.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot read config: {e}"),
    })?;
    let config = ExperimentConfig::from_toml_str(&text, &path.display().to_string())?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

/// 1-based line containing byte `offset`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of the first `key =` or `[key]` in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        let line = line.trim_start();
        let is_assignment = line
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='));
        let is_table = line.trim_start_matches('[').trim_end_matches(']').trim() == key && line.starts_with('[');
        is_assignment || is_table
    })
    .map(|i| i + 1)
}
