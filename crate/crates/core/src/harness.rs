//! The round-based active-learning loop.
//!
//! Each round: consensus labels, cross-validated training, calibration,
//! scoring, batch selection and label collection. A final evaluation-only
//! round follows the last collection, so a run logs `rounds + 1` accuracies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationTable, ClassLabel};
use crate::calibration::{apply_temperature, calibrate};
use crate::classifiers::{predict_all, predict_pool, ClassifierSpec};
use crate::config::{ConsensusRule, ExperimentConfig, FileData, Mode};
use crate::consensus::{crowdlab_consensus_ensemble, fit_trust, TrustEstimates};
use crate::error::{Error, Result};
use crate::io::{self, IdMap};
use crate::matrix::{FeatureMatrix, ProbabilityMatrix};
use crate::par;
use crate::scoring::{score_examples, select_batch, ScorerKind};
use crate::seed::{derive_seed, Purpose};
use crate::simulation::{
    generate_blobs, initialize_pools, AnnotationSource, RecordedAnnotations, SimulatedAnnotators,
};

/// Everything a run may show to the learner. Test labels live in
/// [`TestSet`]; annotator ground truth stays inside the annotation source.
#[derive(Debug, Clone)]
pub struct RunData {
    pub features: FeatureMatrix,
    pub example_names: Vec<String>,
    pub test_features: FeatureMatrix,
    pub test_names: Vec<String>,
    pub initial: AnnotationTable,
    /// Per classifier: fixed predictions for table examples and the test set
    /// when the classifier is external.
    pub external: Vec<Option<(ProbabilityMatrix, ProbabilityMatrix)>>,
}

#[derive(Debug, Clone)]
pub struct TestSet {
    truth: Vec<usize>,
}

impl TestSet {
    pub fn new(truth: Vec<usize>) -> Self {
        Self { truth }
    }

    pub fn accuracy(&self, preds: &ProbabilityMatrix) -> f64 {
        evaluate(preds, &self.truth)
    }
}

/// Fraction of rows whose argmax (ties to the smallest class) equals the truth.
pub fn evaluate(preds: &ProbabilityMatrix, truth: &[usize]) -> f64 {
    assert_eq!(preds.num_rows(), truth.len(), "predictions must cover the test set");
    if truth.is_empty() {
        return 0.0;
    }
    let correct = truth.iter().enumerate().filter(|&(i, &y)| preds.argmax(i) == y).count();
    correct as f64 / truth.len() as f64
}

/// A run's inputs for one master seed.
pub struct PreparedRun {
    pub data: RunData,
    pub test: TestSet,
    pub source: Box<dyn AnnotationSource>,
}

pub fn prepare_run(config: &ExperimentConfig, base_dir: &Path, seed: u64) -> Result<PreparedRun> {
    let mut prepared = match &config.files {
        None => prepare_blobs(config, seed)?,
        Some(files) => prepare_files(config, files, base_dir, seed)?,
    };
    let names = &prepared.data.example_names;
    let test_names = &prepared.data.test_names;
    prepared.data.external = config
        .classifiers
        .iter()
        .map(|spec| match spec {
            ClassifierSpec::External { path } => {
                let path = base_dir.join(path);
                let train = io::load_external_predictions(&path, names)?;
                let test = io::load_external_predictions(&path, test_names)?;
                if train.num_classes() != prepared.data.initial.num_classes() {
                    return Err(Error::DimensionMismatch {
                        expected: prepared.data.initial.num_classes(),
                        got: train.num_classes(),
                    });
                }
                Ok(Some((train, test)))
            }
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;
    Ok(prepared)
}

fn prepare_blobs(config: &ExperimentConfig, seed: u64) -> Result<PreparedRun> {
    let spec = &config.data;
    let data_seed = spec.seed;
    let blobs = generate_blobs(spec, data_seed)?;
    let n = blobs.features.num_rows();
    let initial = initialize_pools(
        n,
        blobs.num_labeled,
        &blobs.truth,
        spec.num_classes,
        &config.annotators.roster(),
        config.annotators.density,
        data_seed,
    )?;
    let source = SimulatedAnnotators::new(blobs.truth, spec.num_classes, config.annotators.clone(), seed);
    Ok(PreparedRun {
        data: RunData {
            features: blobs.features,
            example_names: (0..n).map(|i| i.to_string()).collect(),
            test_names: (0..blobs.test_truth.len()).map(|i| format!("t{i}")).collect(),
            test_features: blobs.test_features,
            initial,
            external: Vec::new(),
        },
        test: TestSet::new(blobs.test_truth),
        source: Box::new(source),
    })
}

fn prepare_files(config: &ExperimentConfig, files: &FileData, base_dir: &Path, seed: u64) -> Result<PreparedRun> {
    let (names, features) = io::read_features(&base_dir.join(&files.features))?;
    let (test_names, test_features) = io::read_features(&base_dir.join(&files.test_features))?;
    if test_features.dim() != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            got: test_features.dim(),
        });
    }
    let mut examples = IdMap::from_names(names.clone())?;
    let mut annotators = IdMap::new();
    let annotations_path = base_dir.join(&files.annotations);
    let initial = io::read_annotations(&annotations_path, &mut examples, &mut annotators)?;
    let recorded = match &files.recorded {
        Some(path) => io::read_annotations(&base_dir.join(path), &mut examples, &mut annotators)?,
        None => Vec::new(),
    };
    if examples.len() != names.len() {
        return Err(Error::Config(format!(
            "example `{}` is annotated but absent from the features file",
            examples.name(names.len())
        )));
    }
    let lookup = |labels: Vec<(String, usize)>, map: &IdMap, what: &str| -> Result<Vec<usize>> {
        let mut out = vec![None; map.len()];
        for (name, y) in labels {
            let i = map
                .get(&name)
                .ok_or_else(|| Error::Config(format!("{what} lists unknown example `{name}`")))?;
            out[i] = Some(y);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, y)| y.ok_or_else(|| Error::Config(format!("{what} has no label for `{}`", map.name(i)))))
            .collect()
    };
    let test_truth = lookup(
        io::read_labels(&base_dir.join(&files.test_labels))?,
        &IdMap::from_names(test_names.clone())?,
        "test labels",
    )?;
    let truth = match &files.truth {
        Some(path) => Some(lookup(io::read_labels(&base_dir.join(path))?, &examples, "truth")?),
        None => None,
    };

    let max_label = initial
        .iter()
        .chain(&recorded)
        .map(|r| r.label)
        .chain(test_truth.iter().copied())
        .chain(truth.iter().flatten().copied())
        .max()
        .unwrap_or(0);
    let k = files.num_classes.unwrap_or((max_label + 1).max(2));
    let mut table = AnnotationTable::new(names.len(), k)?;
    for _ in 0..annotators.len() {
        table.add_annotator();
    }
    let with_line = |r: &io::AnnotationRecord, e: Error| Error::Parse {
        path: annotations_path.display().to_string(),
        line: r.line as usize,
        message: e.to_string(),
    };
    for r in &initial {
        let label = ClassLabel::new(r.label, k).map_err(|e| with_line(r, e))?;
        table.add_annotation(r.example, r.annotator, label).map_err(|e| with_line(r, e))?;
    }
    if let Some(y) = test_truth.iter().chain(truth.iter().flatten()).find(|&&y| y >= k) {
        return Err(Error::InvalidLabel { label: *y, num_classes: k });
    }
    let source: Box<dyn AnnotationSource> = match truth {
        Some(truth) => Box::new(SimulatedAnnotators::new(truth, k, config.annotators.clone(), seed)),
        None => {
            let records = recorded
                .iter()
                .map(|r| Ok((r.example, r.annotator, ClassLabel::new(r.label, k)?)))
                .collect::<Result<Vec<_>>>()?;
            Box::new(RecordedAnnotations::new(names.len(), &records))
        }
    };
    Ok(PreparedRun {
        data: RunData {
            features,
            example_names: names,
            test_features,
            test_names,
            initial: table,
            external: Vec::new(),
        },
        test: TestSet::new(test_truth),
        source,
    })
}

/// Trust quantities recorded per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustSnapshot {
    pub agreement_prob: f64,
    pub annotator_weights: Vec<f64>,
    pub avg_annotator_weight: f64,
    pub model_weights: Vec<f64>,
    pub fallback: bool,
}

impl From<&TrustEstimates> for TrustSnapshot {
    fn from(t: &TrustEstimates) -> Self {
        Self {
            agreement_prob: t.agreement_prob,
            annotator_weights: t.annotator_weights.clone(),
            avg_annotator_weight: t.avg_annotator_weight,
            model_weights: t.model_weights.clone(),
            fallback: t.fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Annotations the round's model was trained on.
    pub total_labels: usize,
    pub test_accuracy: f64,
    /// Selected examples in priority order; empty for the final evaluation.
    pub batch: Vec<usize>,
    pub batch_from_labeled: usize,
    pub batch_from_unlabeled: usize,
    pub trust: Option<TrustSnapshot>,
    /// Examples whose consensus label differs from the previous round's.
    pub consensus_changes: usize,
    pub temperatures: Vec<Option<f64>>,
}

/// Mutable state carried between rounds.
#[derive(Debug, Clone)]
pub struct RunState {
    pub table: AnnotationTable,
    pub round: usize,
    prev_preds: Option<Vec<ProbabilityMatrix>>,
    prev_consensus: Option<Vec<Option<usize>>>,
}

impl RunState {
    pub fn new(table: AnnotationTable) -> Self {
        Self {
            table,
            round: 0,
            prev_preds: None,
            prev_consensus: None,
        }
    }
}

struct Predictions {
    /// Calibrated, one per classifier, rows indexed by example.
    train: Vec<ProbabilityMatrix>,
    test: Vec<ProbabilityMatrix>,
    temperatures: Vec<Option<f64>>,
}

/// One seed's view of an experiment.
pub struct Runner<'a> {
    pub config: &'a ExperimentConfig,
    pub data: &'a RunData,
    pub test: &'a TestSet,
    pub seed: u64,
}

impl Runner<'_> {
    fn consensus(&self, state: &RunState) -> Result<Vec<Option<usize>>> {
        let table = &state.table;
        match (self.config.consensus_rule(), &state.prev_preds) {
            (ConsensusRule::Crowdlab, Some(preds)) if table.total_annotations() > 0 => {
                let refs: Vec<&ProbabilityMatrix> = preds.iter().collect();
                let trust = fit_trust(table, &refs)?;
                Ok(crowdlab_consensus_ensemble(table, &refs, &trust)?.labels)
            }
            (_, prev) => {
                let mean = prev.as_ref().map(|p| mean_of(p));
                Ok(table.majority_vote(mean.as_ref()))
            }
        }
    }

    fn predict(&self, table: &AnnotationTable, labels: &[Option<usize>], round: usize) -> Result<Predictions> {
        let k = table.num_classes();
        if labels.iter().all(Option::is_none) {
            return Err(Error::EmptyTrainingSet);
        }
        let fold_seed = derive_seed(self.seed, round as u64, Purpose::Folds);

        let per_model = par::map_range(self.config.classifiers.len(), |c| -> Result<_> {
            let (full, test) = match &self.data.external[c] {
                Some((train, test)) => (train.clone(), test.clone()),
                None => {
                    let spec = &self.config.classifiers[c];
                    let (full, models) = predict_all(spec, &self.data.features, labels, k, self.config.folds, fold_seed)?;
                    (full, predict_pool(&models, &self.data.test_features)?)
                }
            };
            let (calibrated, temperature) = calibrate(table, &full, &self.config.calibration)?;
            let test = match temperature {
                Some(t) => apply_temperature(&test, t, self.config.calibration.input),
                None => test,
            };
            Ok((calibrated, test, temperature.map(|t| t.value())))
        });
        let mut out = Predictions {
            train: Vec::new(),
            test: Vec::new(),
            temperatures: Vec::new(),
        };
        for result in per_model {
            let (train, test, t) = result?;
            out.train.push(train);
            out.test.push(test);
            out.temperatures.push(t);
        }
        Ok(out)
    }

    /// Trains, evaluates and (when `collect` is set) selects and labels a batch.
    /// The table changes only if every step succeeds.
    pub fn run_round(&self, state: &mut RunState, source: &mut dyn AnnotationSource, collect: bool) -> Result<RoundLog> {
        let round = state.round;
        let table = &state.table;
        let labels = self.consensus(state)?;
        let preds = self.predict(table, &labels, round)?;

        let scored = if collect {
            let scorer_seed = derive_seed(self.seed, round as u64, Purpose::Scorer);
            Some(score_examples(
                self.config.scorer,
                table,
                &preds.train,
                &self.config.scoring_options(),
                scorer_seed,
            )?)
        } else {
            None
        };
        let trust = match scored.as_ref().and_then(|s| s.trust.clone()) {
            Some(t) => Some(t),
            None => {
                let refs: Vec<&ProbabilityMatrix> = preds.train.iter().collect();
                fit_trust(table, &refs).ok()
            }
        };

        let test_refs: Vec<&ProbabilityMatrix> = preds.test.iter().collect();
        let ensemble_weights = match (self.config.scorer, &trust) {
            (ScorerKind::ActivelabEnsemble, Some(t)) => t.model_weights.clone(),
            _ => vec![1.0; test_refs.len()],
        };
        let test_accuracy = self.test.accuracy(&ProbabilityMatrix::weighted_mean(&test_refs, &ensemble_weights));

        let batch = match &scored {
            Some(scored) => {
                let candidates: Vec<usize> = (0..table.num_examples())
                    .filter(|&i| self.config.mode != Mode::SingleLabel || !table.is_labeled(i))
                    .filter(|&i| source.can_label(table, i))
                    .collect();
                select_batch(&scored.scores.scores, self.config.batch_size, &candidates).examples
            }
            None => Vec::new(),
        };
        let new_labels = if batch.is_empty() {
            Vec::new()
        } else {
            source.collect(table, &crate::scoring::Batch { examples: batch.clone() }, round)?
        };
        let batch_from_labeled = batch.iter().filter(|&&i| table.is_labeled(i)).count();
        let consensus_changes = match &state.prev_consensus {
            Some(prev) => labels
                .iter()
                .zip(prev)
                .filter(|(a, b)| a.is_some() && b.is_some() && a != b)
                .count(),
            None => 0,
        };
        let log = RoundLog {
            round,
            total_labels: table.total_annotations(),
            test_accuracy,
            batch_from_labeled,
            batch_from_unlabeled: batch.len() - batch_from_labeled,
            batch,
            trust: trust.as_ref().map(TrustSnapshot::from),
            consensus_changes,
            temperatures: preds.temperatures,
        };

        state.table.add_all(&new_labels)?;
        state.prev_preds = Some(preds.train);
        state.prev_consensus = Some(labels);
        state.round += 1;
        Ok(log)
    }
}

fn mean_of(preds: &[ProbabilityMatrix]) -> ProbabilityMatrix {
    let refs: Vec<&ProbabilityMatrix> = preds.iter().collect();
    ProbabilityMatrix::weighted_mean(&refs, &vec![1.0; refs.len()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub rounds: Vec<RoundLog>,
}

impl SeedRun {
    pub fn final_accuracy(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.test_accuracy)
    }
}

/// Across-seed statistics for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub round: usize,
    pub mean_total_labels: f64,
    pub mean_accuracy: f64,
    /// Sample standard deviation; zero for a single seed.
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn mean_final_accuracy(&self) -> f64 {
        self.aggregate.last().map_or(0.0, |r| r.mean_accuracy)
    }
}

pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(runs: &[SeedRun]) -> Vec<AggregateRow> {
    let rounds = runs.iter().map(|r| r.rounds.len()).min().unwrap_or(0);
    (0..rounds)
        .map(|r| {
            let acc: Vec<f64> = runs.iter().map(|run| run.rounds[r].test_accuracy).collect();
            let labels: Vec<f64> = runs.iter().map(|run| run.rounds[r].total_labels as f64).collect();
            let (mean_accuracy, std_accuracy) = mean_and_sd(&acc);
            AggregateRow {
                round: r,
                mean_total_labels: mean_and_sd(&labels).0,
                mean_accuracy,
                std_accuracy,
            }
        })
        .collect()
}

pub fn run_seed(config: &ExperimentConfig, base_dir: &Path, seed: u64) -> Result<SeedRun> {
    let PreparedRun { data, test, mut source } = prepare_run(config, base_dir, seed)?;
    let runner = Runner {
        config,
        data: &data,
        test: &test,
        seed,
    };
    let mut state = RunState::new(data.initial.clone());
    let mut rounds = Vec::with_capacity(config.rounds + 1);
    for r in 0..=config.rounds {
        let log = runner.run_round(&mut state, source.as_mut(), r < config.rounds)?;
        log::info!(
            "seed {seed} round {r}: {} labels, accuracy {:.4}",
            log.total_labels,
            log.test_accuracy
        );
        rounds.push(log);
    }
    Ok(SeedRun { seed, rounds })
}

/// Runs every seed (concurrently when the `parallel` feature is on).
pub fn run_experiment(config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentResult> {
    config.validate()?;
    let runs = par::try_collect(par::map_slice(&config.seeds, |&seed| run_seed(config, base_dir, seed)))?;
    let aggregate = aggregate(&runs);
    Ok(ExperimentResult { runs, aggregate })
}

/// Paired single-label vs multiannotator results.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub single: ExperimentResult,
    pub multi: ExperimentResult,
}

/// The two arms built from one base config: entropy on unlabeled examples
/// only versus ActiveLab on all examples.
pub fn paired_configs(base: &ExperimentConfig) -> (ExperimentConfig, ExperimentConfig) {
    let single = ExperimentConfig {
        scorer: ScorerKind::Entropy,
        mode: Mode::SingleLabel,
        consensus: None,
        ..base.clone()
    };
    let multi = ExperimentConfig {
        scorer: ScorerKind::Activelab,
        mode: Mode::Multiannotator,
        consensus: None,
        ..base.clone()
    };
    (single, multi)
}

pub fn compare_single_vs_multi(single: &ExperimentConfig, multi: &ExperimentConfig, base_dir: &Path) -> Result<Comparison> {
    if single.data != multi.data || single.files != multi.files {
        return Err(Error::Config("paired arms must share the dataset".into()));
    }
    if single.seeds != multi.seeds {
        return Err(Error::Config("paired arms must share seeds".into()));
    }
    if single.annotators != multi.annotators {
        return Err(Error::Config("paired arms must share the annotator noise schedule".into()));
    }
    if single.classifiers != multi.classifiers || single.rounds != multi.rounds || single.batch_size != multi.batch_size {
        return Err(Error::Config("paired arms must share classifiers, rounds and batch size".into()));
    }
    if single.mode != Mode::SingleLabel || multi.mode != Mode::Multiannotator {
        return Err(Error::Config("arms must be single_label and multiannotator".into()));
    }
    Ok(Comparison {
        single: run_experiment(single, base_dir)?,
        multi: run_experiment(multi, base_dir)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::PoolSpec;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            seeds: vec![1, 2],
            rounds: 3,
            batch_size: 10,
            data: PoolSpec {
                num_labeled: 40,
                num_pool: 60,
                num_test: 50,
                num_classes: 3,
                dim: 3,
                spread: 1.0,
                seed: 0,
            },
            classifiers: vec![ClassifierSpec::Knn { k: 5 }],
            ..Default::default()
        }
    }

    #[test]
    fn evaluate_examples() {
        let p = ProbabilityMatrix::from_rows(2, &[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert_eq!(evaluate(&p, &[0, 1]), 1.0);
        assert_eq!(evaluate(&p, &[1, 1]), 0.5);
        let tie = ProbabilityMatrix::from_rows(3, &[vec![0.4, 0.4, 0.2]]).unwrap();
        assert_eq!(evaluate(&tie, &[0]), 1.0);
        assert_eq!(evaluate(&tie, &[1]), 0.0);
    }

    #[test]
    fn random_predictions_score_half() {
        use rand::Rng;
        let mut rng = crate::seed::item_rng(5, 0);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let p: f64 = rng.random();
                vec![p, 1.0 - p]
            })
            .collect();
        let truth: Vec<usize> = (0..10_000).map(|i| i % 2).collect();
        let acc = evaluate(&ProbabilityMatrix::from_rows(2, &rows).unwrap(), &truth);
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }

    #[test]
    fn experiment_bookkeeping() {
        let config = small_config();
        let result = run_experiment(&config, Path::new(".")).unwrap();
        assert_eq!(result.runs.len(), 2);
        assert!(result.runs.iter().all(|r| r.rounds.len() == 4));
        assert_eq!(result.aggregate.len(), 4);
        for (r, row) in result.aggregate.iter().enumerate() {
            let mean = result.runs.iter().map(|run| run.rounds[r].test_accuracy).sum::<f64>() / 2.0;
            assert!((row.mean_accuracy - mean).abs() < 1e-15);
        }
        for run in &result.runs {
            for w in run.rounds.windows(2) {
                assert_eq!(w[1].total_labels, w[0].total_labels + 10);
                assert_eq!(w[0].batch.len(), 10);
            }
            assert!(run.rounds.last().unwrap().batch.is_empty());
        }
    }

    #[test]
    fn round_is_replayable() {
        let config = small_config();
        let a = run_seed(&config, Path::new("."), 7).unwrap();
        let b = run_seed(&config, Path::new("."), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_label_selects_only_unlabeled() {
        let config = ExperimentConfig {
            mode: Mode::SingleLabel,
            scorer: ScorerKind::Entropy,
            ..small_config()
        };
        let PreparedRun { data, test, mut source } = prepare_run(&config, Path::new("."), 3).unwrap();
        let runner = Runner {
            config: &config,
            data: &data,
            test: &test,
            seed: 3,
        };
        let mut state = RunState::new(data.initial.clone());
        for _ in 0..3 {
            let before = state.table.clone();
            let log = runner.run_round(&mut state, source.as_mut(), true).unwrap();
            assert!(log.batch.iter().all(|&i| !before.is_labeled(i)));
            assert_eq!(log.batch_from_labeled, 0);
            assert_eq!(state.table.total_annotations(), before.total_annotations() + log.batch.len());
        }
    }

    #[test]
    fn label_cleaning_only_relabels() {
        let mut config = small_config();
        config.mode = Mode::LabelCleaning;
        config.data.num_pool = 0;
        let result = run_experiment(&config, Path::new(".")).unwrap();
        for run in &result.runs {
            for log in &run.rounds {
                assert_eq!(log.batch_from_unlabeled, 0);
            }
        }
    }

    #[test]
    fn failed_collection_leaves_table_untouched() {
        struct Broken;
        impl AnnotationSource for Broken {
            fn collect(
                &mut self,
                _: &AnnotationTable,
                _: &crate::scoring::Batch,
                _: usize,
            ) -> Result<Vec<(usize, usize, ClassLabel)>> {
                // The second label duplicates the first.
                let l = ClassLabel::new(0, 3)?;
                Ok(vec![(50, 99, l), (50, 99, l)])
            }
        }
        let config = small_config();
        let prepared = prepare_run(&config, Path::new("."), 0).unwrap();
        let runner = Runner {
            config: &config,
            data: &prepared.data,
            test: &prepared.test,
            seed: 0,
        };
        let mut state = RunState::new(prepared.data.initial.clone());
        let before = state.table.clone();
        assert!(runner.run_round(&mut state, &mut Broken, true).is_err());
        assert_eq!(state.table, before);
        assert_eq!(state.round, 0);
    }

    #[test]
    fn paired_arms_must_match() {
        let base = small_config();
        let (single, mut multi) = paired_configs(&base);
        multi.seeds = vec![9];
        assert!(compare_single_vs_multi(&single, &multi, Path::new(".")).is_err());
        let (single, multi) = paired_configs(&base);
        assert!(compare_single_vs_multi(&multi, &single, Path::new(".")).is_err());
    }

    #[test]
    fn paired_arms_share_round_zero() {
        let base = small_config();
        let (single, multi) = paired_configs(&base);
        let cmp = compare_single_vs_multi(&single, &multi, Path::new(".")).unwrap();
        for (s, m) in cmp.single.runs.iter().zip(&cmp.multi.runs) {
            assert_eq!(s.rounds[0].test_accuracy, m.rounds[0].test_accuracy);
            assert_eq!(s.rounds[0].total_labels, m.rounds[0].total_labels);
        }
    }
}
