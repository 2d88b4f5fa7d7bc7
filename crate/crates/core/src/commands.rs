//! The `run`, `score`, `consensus` and `report` commands.
//!
//! Each command refuses to overwrite existing outputs unless forced, and a
//! failed `run` leaves no partial files behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::annotations::{AnnotationTable, ClassLabel};
use crate::calibration::{calibrate, CalibrationConfig};
use crate::classifiers::{predict_all, ClassifierSpec, DEFAULT_FOLDS};
use crate::config::{self, sha256_hex, ConsensusRule};
use crate::consensus::{crowdlab_consensus_ensemble, fit_trust};
use crate::error::{Error, Result};
use crate::harness::{run_experiment, ExperimentResult};
use crate::io::{self, csv_writer, fmt_f64, IdMap};
use crate::matrix::{FeatureMatrix, ProbabilityMatrix};
use crate::report::{self, RunManifest, Sidecar};
use crate::scoring::{score_examples, DisagreementForm, ScorerKind, ScoringOptions};

pub const CONFIG_ECHO: &str = "config.toml";
pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const CHART_SVG: &str = "accuracy.svg";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const CONSENSUS_CSV: &str = "consensus.csv";
pub const ANNOTATORS_CSV: &str = "annotators.csv";

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Refuses when any of `names` already exists in `dir` and `force` is unset.
fn ensure_writable(dir: &Path, names: &[&str], force: bool) -> Result<()> {
    if !force && names.iter().any(|name| dir.join(name).exists()) {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    Ok(())
}

/// Files written so far; removed again unless the transaction commits.
struct OutputTransaction {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputTransaction {
    fn begin(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            committed: false,
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        fs::write(&path, contents)?;
        Ok(path)
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        f(&path)?;
        Ok(path)
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputTransaction {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Replaces the config's seed list with this single seed.
    pub seed: Option<u64>,
    /// Replaces the config's scorer.
    pub scorer: Option<ScorerKind>,
    pub force: bool,
}

#[derive(Debug)]
pub struct RunOutputs {
    pub files: Vec<PathBuf>,
    pub result: ExperimentResult,
    pub summary: String,
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutputs> {
    let started = unix_now();
    let loaded = config::load(&args.config)?;
    let mut config = loaded.config;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(scorer) = args.scorer {
        config.scorer = scorer;
    }
    config.validate()?;
    let outputs = [CONFIG_ECHO, RESULTS_CSV, RESULTS_JSON, CHART_SVG, SUMMARY_CSV, MANIFEST_JSON];
    ensure_writable(&args.out, &outputs, args.force)?;

    let result = run_experiment(&config, &loaded.base_dir)?;
    let rows = report::result_rows(&config, &result);
    let curves = report::curves(&[(config.scorer.name().to_string(), rows.clone())])?;

    let mut tx = OutputTransaction::begin(&args.out)?;
    if args.force {
        for name in outputs {
            let stale = args.out.join(name);
            if stale.exists() {
                fs::remove_file(stale)?;
            }
        }
    }
    let echo = config.to_toml();
    tx.write(CONFIG_ECHO, echo.as_bytes())?;
    tx.write_with(RESULTS_CSV, |p| report::write_results_csv(p, &rows))?;
    let sidecar = Sidecar {
        config: config.clone(),
        runs: result.runs.clone(),
        aggregate: result.aggregate.clone(),
    };
    tx.write(RESULTS_JSON, (serde_json::to_string_pretty(&sidecar)? + "\n").as_bytes())?;
    tx.write_with(SUMMARY_CSV, |p| report::write_summary_csv(p, &curves))?;
    if config.report.chart {
        tx.write(CHART_SVG, report::render_svg(&curves).as_bytes())?;
    }
    let mut listed: Vec<String> = tx
        .written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    listed.push(MANIFEST_JSON.to_string());
    let manifest = RunManifest {
        config_hash: sha256_hex(echo.as_bytes()),
        config_source: args.config.display().to_string(),
        versions: [("activelab".to_string(), env!("CARGO_PKG_VERSION").to_string())].into(),
        started_unix: started,
        finished_unix: unix_now(),
        outputs: listed,
    };
    tx.write(MANIFEST_JSON, (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    Ok(RunOutputs {
        files: tx.commit(),
        summary: report::summary_table(&curves),
        result,
    })
}

/// Annotations plus either prediction files or features, over one example set.
pub struct Inputs {
    pub examples: IdMap,
    pub annotators: IdMap,
    pub table: AnnotationTable,
    pub predictions: Vec<ProbabilityMatrix>,
    pub features: Option<FeatureMatrix>,
}

/// Loads inputs for `score` and `consensus`. The example set is the first
/// predictions file's (or the features file's); annotations may not name
/// other examples, and every file must agree on the class count.
pub fn load_inputs(
    annotations: &Path,
    predictions: &[PathBuf],
    features: Option<&Path>,
    num_classes: Option<usize>,
) -> Result<Inputs> {
    let (names, preds, feats) = match (predictions.split_first(), features) {
        (Some((first, rest)), None) => {
            let (names, p0) = io::read_predictions(first)?;
            let mut preds = vec![p0];
            for path in rest {
                let (ids, p) = io::read_predictions(path)?;
                if p.num_classes() != preds[0].num_classes() {
                    return Err(Error::Config(format!(
                        "inconsistent class count: {} has {} classes, {} has {}",
                        first.display(),
                        preds[0].num_classes(),
                        path.display(),
                        p.num_classes()
                    )));
                }
                preds.push(io::align_rows(&ids, &p, &names)?);
            }
            (names, preds, None)
        }
        (None, Some(path)) => {
            let (names, x) = io::read_features(path)?;
            (names, Vec::new(), Some(x))
        }
        _ => {
            return Err(Error::Config(
                "provide either prediction files or a features file".into(),
            ))
        }
    };
    let mut examples = IdMap::from_names(names)?;
    let n = examples.len();
    let mut annotators = IdMap::new();
    let records = io::read_annotations(annotations, &mut examples, &mut annotators)?;
    if examples.len() > n {
        return Err(Error::MissingPredictions(examples.name(n).to_string()));
    }
    let max_label = records.iter().map(|r| r.label).max().unwrap_or(0);
    let k = match (preds.first().map(ProbabilityMatrix::num_classes), num_classes) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Config(format!(
                "inconsistent class count: predictions have {a} classes, --num-classes is {b}"
            )))
        }
        (Some(k), _) | (None, Some(k)) => k,
        (None, None) => (max_label + 1).max(2),
    };
    let mut table = AnnotationTable::new(n, k)?;
    for _ in 0..annotators.len() {
        table.add_annotator();
    }
    for r in &records {
        let located = |e: Error| Error::Parse {
            path: annotations.display().to_string(),
            line: r.line as usize,
            message: match e {
                Error::InvalidLabel { label, num_classes } => {
                    format!("inconsistent class count: label {label} but {num_classes} classes")
                }
                other => other.to_string(),
            },
        };
        let label = ClassLabel::new(r.label, k).map_err(located)?;
        table.add_annotation(r.example, r.annotator, label).map_err(located)?;
    }
    Ok(Inputs {
        examples,
        annotators,
        table,
        predictions: preds,
        features: feats,
    })
}

#[derive(Debug, Clone)]
pub struct ScoreArgs {
    pub annotations: PathBuf,
    pub predictions: Vec<PathBuf>,
    pub features: Option<PathBuf>,
    /// Used only with `features`.
    pub classifier: ClassifierSpec,
    pub scorer: ScorerKind,
    pub num_classes: Option<usize>,
    pub seed: u64,
    /// Temperature-scale supplied predictions (trained ones always are).
    pub calibrate: bool,
    pub single_label: bool,
    pub disagreement_form: DisagreementForm,
}

/// `example_id,score,pool` rows in ascending score order.
pub fn cmd_score(args: &ScoreArgs) -> Result<String> {
    let inputs = load_inputs(&args.annotations, &args.predictions, args.features.as_deref(), args.num_classes)?;
    let table = &inputs.table;
    let calibration = CalibrationConfig::default();
    let preds = match &inputs.features {
        Some(x) => {
            let labels = table.majority_vote(None);
            if labels.iter().all(Option::is_none) {
                return Err(Error::EmptyTrainingSet);
            }
            let (full, _) = predict_all(&args.classifier, x, &labels, table.num_classes(), DEFAULT_FOLDS, args.seed)?;
            vec![calibrate(table, &full, &calibration)?.0]
        }
        None if args.calibrate => inputs
            .predictions
            .iter()
            .map(|p| calibrate(table, p, &calibration).map(|(c, _)| c))
            .collect::<Result<_>>()?,
        None => inputs.predictions.clone(),
    };
    let options = ScoringOptions {
        disagreement_form: args.disagreement_form,
        single_label: args.single_label,
    };
    let scored = score_examples(args.scorer, table, &preds, &options, args.seed)?;
    let scores = &scored.scores.scores;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let mut w = csv_writer(Vec::new());
    w.write_record(["example_id", "score", "pool"])?;
    for i in order {
        let pool = if table.is_labeled(i) { "labeled" } else { "unlabeled" };
        w.write_record([inputs.examples.name(i), &fmt_f64(scores[i]), pool])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn write_score_output(text: &str, out: &Path, force: bool) -> Result<()> {
    if out.exists() && !force {
        return Err(Error::OutputExists(out.to_path_buf()));
    }
    fs::write(out, text)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ConsensusArgs {
    pub annotations: PathBuf,
    pub predictions: Vec<PathBuf>,
    pub method: ConsensusRule,
    pub num_classes: Option<usize>,
    pub calibrate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutput {
    /// `example_id,consensus_label,consensus_confidence` for labeled examples.
    pub consensus_csv: String,
    /// `annotator_id,weight,agreement`, one row per annotator.
    pub annotators_csv: String,
}

pub fn cmd_consensus(args: &ConsensusArgs) -> Result<ConsensusOutput> {
    let inputs = load_inputs(&args.annotations, &args.predictions, None, args.num_classes)?;
    let table = &inputs.table;
    if table.total_annotations() == 0 {
        return Err(Error::EmptyTable);
    }
    let preds: Vec<ProbabilityMatrix> = if args.calibrate {
        let config = CalibrationConfig::default();
        inputs
            .predictions
            .iter()
            .map(|p| calibrate(table, p, &config).map(|(c, _)| c))
            .collect::<Result<_>>()?
    } else {
        inputs.predictions.clone()
    };
    let refs: Vec<&ProbabilityMatrix> = preds.iter().collect();
    let trust = fit_trust(table, &refs)?;
    let (labels, confidence): (Vec<Option<usize>>, Vec<Option<f64>>) = match args.method {
        ConsensusRule::MajorityVote => {
            let mean = ProbabilityMatrix::weighted_mean(&refs, &vec![1.0; refs.len()]);
            let labels = table.majority_vote(Some(&mean));
            let share = (0..table.num_examples())
                .map(|i| {
                    labels[i].map(|y| {
                        let anns = table.annotations(i);
                        anns.iter().filter(|a| a.label.index() == y).count() as f64 / anns.len() as f64
                    })
                })
                .collect();
            (labels, share)
        }
        ConsensusRule::Crowdlab => {
            let result = crowdlab_consensus_ensemble(table, &refs, &trust)?;
            let conf = (0..table.num_examples()).map(|i| result.confidence(i)).collect();
            (result.labels, conf)
        }
    };

    let mut w = csv_writer(Vec::new());
    w.write_record(["example_id", "consensus_label", "consensus_confidence"])?;
    for i in 0..table.num_examples() {
        if let (Some(y), Some(c)) = (labels[i], confidence[i]) {
            w.write_record([inputs.examples.name(i), &y.to_string(), &fmt_f64(c)])?;
        }
    }
    let consensus_csv = finish(w)?;

    let mut w = csv_writer(Vec::new());
    w.write_record(["annotator_id", "weight", "agreement"])?;
    for j in 0..inputs.annotators.len() {
        w.write_record([
            inputs.annotators.name(j),
            &fmt_f64(trust.annotator_weights[j]),
            &fmt_f64(trust.agreements[j]),
        ])?;
    }
    let annotators_csv = finish(w)?;
    if trust.fallback {
        log::warn!("no example has more than one annotation; trust estimates use the single-annotation fallback");
    }
    Ok(ConsensusOutput {
        consensus_csv,
        annotators_csv,
    })
}

pub fn write_consensus_output(output: &ConsensusOutput, out_dir: &Path, force: bool) -> Result<Vec<PathBuf>> {
    ensure_writable(out_dir, &[CONSENSUS_CSV, ANNOTATORS_CSV], force)?;
    let mut tx = OutputTransaction::begin(out_dir)?;
    tx.write(CONSENSUS_CSV, output.consensus_csv.as_bytes())?;
    tx.write(ANNOTATORS_CSV, output.annotators_csv.as_bytes())?;
    Ok(tx.commit())
}

/// Results files to chart; directories stand for their `results.csv`.
pub fn cmd_report(inputs: &[PathBuf], out_dir: &Path, force: bool) -> Result<String> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one results file".into()));
    }
    let mut sources = Vec::with_capacity(inputs.len());
    for input in inputs {
        let path = if input.is_dir() { input.join(RESULTS_CSV) } else { input.clone() };
        let name = if input.is_dir() {
            input.file_name()
        } else {
            input.parent().and_then(Path::file_name).or(input.file_stem())
        }
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        sources.push((name, report::read_results_csv(&path)?));
    }
    let curves = report::curves(&sources)?;
    ensure_writable(out_dir, &[CHART_SVG, SUMMARY_CSV], force)?;
    let mut tx = OutputTransaction::begin(out_dir)?;
    tx.write(CHART_SVG, report::render_svg(&curves).as_bytes())?;
    tx.write_with(SUMMARY_CSV, |p| report::write_summary_csv(p, &curves))?;
    tx.commit();
    Ok(report::summary_table(&curves))
}
