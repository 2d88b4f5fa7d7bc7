//! Synthetic datasets and simulated annotators.
//!
//! Ground truth lives only inside [`SimulatedAnnotators`] and the test set;
//! consensus, trust, calibration and scoring never see it.

use std::collections::VecDeque;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationTable, ClassLabel};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scoring::Batch;
use crate::seed::{derive_rng, derive_seed, item_rng, Purpose};

/// Layout of a synthetic Gaussian-blob benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSpec {
    pub num_labeled: usize,
    pub num_pool: usize,
    pub num_test: usize,
    pub num_classes: usize,
    pub dim: usize,
    /// Standard deviation of each cluster around its center. Centers are
    /// standard-normal draws.
    pub spread: f64,
    /// Seed of the dataset and initial annotations, shared by every run.
    pub seed: u64,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            num_labeled: 300,
            num_pool: 900,
            num_test: 600,
            num_classes: 4,
            dim: 10,
            spread: 2.0,
            seed: 0,
        }
    }
}

impl PoolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("data.num_classes must be at least 2".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("data.dim must be positive".into()));
        }
        if self.num_labeled == 0 {
            return Err(Error::Config("data.num_labeled must be at least 1".into()));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::Config("data.spread must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-run annotator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    /// Size of the roster that produced the initial annotations.
    pub initial_count: usize,
    /// Expected fraction of the roster kept per initially labeled example,
    /// in `[1/initial_count, 1]`.
    pub density: f64,
    /// Flip probability of the initial annotators.
    pub noise_rate: f64,
    /// Flip probability of the fresh annotator in each round; the last entry
    /// repeats. Empty means `noise_rate` throughout.
    pub round_noise: Vec<f64>,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            initial_count: 5,
            density: 0.3,
            noise_rate: 0.3,
            round_noise: Vec::new(),
        }
    }
}

impl AnnotatorConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.initial_count == 0 {
            return Err(Error::Config("annotators.initial_count must be at least 1".into()));
        }
        if !in_unit(self.noise_rate) || !self.round_noise.iter().all(|&v| in_unit(v)) {
            return Err(Error::Config("annotator noise rates must lie in [0, 1]".into()));
        }
        if !(self.density <= 1.0) {
            return Err(Error::Config("annotators.density must be at most 1".into()));
        }
        Ok(())
    }

    pub fn roster(&self) -> Vec<AnnotatorProfile> {
        (0..self.initial_count)
            .map(|j| AnnotatorProfile {
                annotator: j,
                noise_rate: self.noise_rate,
            })
            .collect()
    }

    pub fn noise_for_round(&self, round: usize) -> f64 {
        match self.round_noise.len() {
            0 => self.noise_rate,
            len => self.round_noise[round.min(len - 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator: usize,
    pub noise_rate: f64,
}

/// Generated blobs, split into the annotation table's examples (initially
/// labeled first, then the pool) and a held-out test set.
#[derive(Debug, Clone)]
pub struct Blobs {
    pub features: FeatureMatrix,
    pub truth: Vec<usize>,
    pub test_features: FeatureMatrix,
    pub test_truth: Vec<usize>,
    pub num_labeled: usize,
}

pub fn generate_blobs(spec: &PoolSpec, seed: u64) -> Result<Blobs> {
    spec.validate()?;
    let k = spec.num_classes;
    let d = spec.dim;
    let total = spec.num_labeled + spec.num_pool + spec.num_test;
    let mut rng = derive_rng(seed, 0, Purpose::Dataset);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let labels: Vec<usize> = (0..total).map(|i| i % k).collect();
    let points: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            centers[y]
                .iter()
                .map(|c| c + spec.spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    // Shuffle within each class and deal the classes in turn, so every split
    // gets near-equal class counts; then shuffle inside each split.
    let mut split_rng = derive_rng(seed, 0, Purpose::Split);
    let mut by_class: Vec<Vec<usize>> = (0..k).map(|c| (c..total).step_by(k).collect()).collect();
    for members in &mut by_class {
        members.shuffle(&mut split_rng);
    }
    let mut order = Vec::with_capacity(total);
    for r in 0..total.div_ceil(k) {
        order.extend(by_class.iter().filter_map(|members| members.get(r)));
    }
    let n_train = spec.num_labeled + spec.num_pool;
    order[..spec.num_labeled].shuffle(&mut split_rng);
    order[spec.num_labeled..n_train].shuffle(&mut split_rng);
    order[n_train..].shuffle(&mut split_rng);
    let (train_idx, test_idx) = order.split_at(n_train);

    let gather = |idx: &[usize]| -> Result<(FeatureMatrix, Vec<usize>)> {
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&points[i]);
        }
        Ok((FeatureMatrix::new(d, data)?, idx.iter().map(|&i| labels[i]).collect()))
    };
    let (features, truth) = gather(train_idx)?;
    let (test_features, test_truth) = gather(test_idx)?;
    Ok(Blobs {
        features,
        truth,
        test_features,
        test_truth,
        num_labeled: spec.num_labeled,
    })
}

/// Correct label with probability `1 - noise_rate`, otherwise a uniformly
/// chosen wrong class.
pub fn simulate_annotator_label<R: Rng + ?Sized>(noise_rate: f64, true_label: usize, num_classes: usize, rng: &mut R) -> usize {
    if rng.random::<f64>() < noise_rate {
        let wrong = rng.random_range(0..num_classes - 1);
        if wrong >= true_label {
            wrong + 1
        } else {
            wrong
        }
    } else {
        true_label
    }
}

/// Initial annotation table: the first `num_labeled` examples receive labels
/// from a random subset of the roster (at least one annotator each); the rest
/// stay unlabeled.
pub fn initialize_pools(
    num_examples: usize,
    num_labeled: usize,
    truth: &[usize],
    num_classes: usize,
    roster: &[AnnotatorProfile],
    density: f64,
    seed: u64,
) -> Result<AnnotationTable> {
    if roster.is_empty() {
        return Err(Error::Config("annotator roster is empty".into()));
    }
    let m = roster.len();
    let min_density = 1.0 / m as f64;
    if density + 1e-12 < min_density {
        return Err(Error::Config(format!(
            "annotation density {density} cannot give every labeled example an annotation \
             with {m} annotators (minimum {min_density})"
        )));
    }
    // One guaranteed annotator plus each other annotator independently, so
    // the expected fraction of the roster per example equals `density`.
    let keep = if m > 1 {
        ((density * m as f64 - 1.0) / (m as f64 - 1.0)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut table = AnnotationTable::new(num_examples, num_classes)?;
    for _ in 0..m {
        table.add_annotator();
    }
    let base = derive_seed(seed, 0, Purpose::InitialAnnotations);
    for i in 0..num_labeled {
        let mut rng = item_rng(base, i as u64);
        let chosen = *roster.choose(&mut rng).expect("nonempty roster");
        for profile in roster {
            let included = profile.annotator == chosen.annotator || rng.random::<f64>() < keep;
            if included {
                let label = simulate_annotator_label(profile.noise_rate, truth[i], num_classes, &mut rng);
                table.add_annotation(i, profile.annotator, ClassLabel::new(label, num_classes)?)?;
            }
        }
    }
    Ok(table)
}

/// Supplies new annotations for a selected batch.
pub trait AnnotationSource: Send + Sync {
    /// Whether this source can still label `example`.
    fn can_label(&self, _table: &AnnotationTable, _example: usize) -> bool {
        true
    }

    /// New `(example, annotator, label)` triples for `batch` in `round`.
    fn collect(&mut self, table: &AnnotationTable, batch: &Batch, round: usize) -> Result<Vec<(usize, usize, ClassLabel)>>;
}

/// Simulated annotators with known ground truth: each round a fresh
/// annotator labels the whole batch.
#[derive(Debug, Clone)]
pub struct SimulatedAnnotators {
    truth: Vec<usize>,
    num_classes: usize,
    config: AnnotatorConfig,
    seed: u64,
}

impl SimulatedAnnotators {
    pub fn new(truth: Vec<usize>, num_classes: usize, config: AnnotatorConfig, seed: u64) -> Self {
        Self {
            truth,
            num_classes,
            config,
            seed,
        }
    }
}

impl AnnotationSource for SimulatedAnnotators {
    fn collect(&mut self, table: &AnnotationTable, batch: &Batch, round: usize) -> Result<Vec<(usize, usize, ClassLabel)>> {
        let annotator = table.num_annotators();
        let noise = self.config.noise_for_round(round);
        let base = derive_seed(self.seed, round as u64, Purpose::Annotator);
        batch
            .examples
            .iter()
            .map(|&i| {
                let mut rng = item_rng(base, i as u64);
                let label = simulate_annotator_label(noise, self.truth[i], self.num_classes, &mut rng);
                Ok((i, annotator, ClassLabel::new(label, self.num_classes)?))
            })
            .collect()
    }
}

/// Pre-recorded annotations handed out in file order, skipping annotators
/// who already labeled the example.
#[derive(Debug, Clone, Default)]
pub struct RecordedAnnotations {
    queue: Vec<VecDeque<(usize, ClassLabel)>>,
}

impl RecordedAnnotations {
    pub fn new(num_examples: usize, records: &[(usize, usize, ClassLabel)]) -> Self {
        let mut queue = vec![VecDeque::new(); num_examples];
        for &(i, j, label) in records {
            queue[i].push_back((j, label));
        }
        Self { queue }
    }
}

impl AnnotationSource for RecordedAnnotations {
    fn can_label(&self, table: &AnnotationTable, example: usize) -> bool {
        self.queue[example]
            .iter()
            .any(|&(j, _)| j >= table.num_annotators() || table.label_of(example, j).is_none())
    }

    fn collect(&mut self, table: &AnnotationTable, batch: &Batch, _round: usize) -> Result<Vec<(usize, usize, ClassLabel)>> {
        let mut out = Vec::with_capacity(batch.examples.len());
        for &i in &batch.examples {
            let fresh = |&(j, _): &(usize, ClassLabel)| j >= table.num_annotators() || table.label_of(i, j).is_none();
            match self.queue[i].iter().position(fresh) {
                Some(pos) => {
                    let (j, label) = self.queue[i].remove(pos).expect("position is valid");
                    out.push((i, j, label));
                }
                None => log::warn!("no recorded annotation left for example {i}"),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(spread: f64) -> PoolSpec {
        PoolSpec {
            num_labeled: 40,
            num_pool: 40,
            num_test: 40,
            num_classes: 3,
            dim: 4,
            spread,
            seed: 0,
        }
    }

    #[test]
    fn blobs_are_reproducible_and_sized() {
        let a = generate_blobs(&spec(1.0), 3).unwrap();
        let b = generate_blobs(&spec(1.0), 3).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.features.num_rows(), 80);
        assert_eq!(a.test_features.num_rows(), 40);
        assert_ne!(generate_blobs(&spec(1.0), 4).unwrap().features, a.features);
    }

    #[test]
    fn zero_spread_is_perfectly_separable_for_one_nn() {
        use crate::classifiers::{train, ClassifierSpec};
        let blobs = generate_blobs(&spec(0.0), 1).unwrap();
        let model = train(&ClassifierSpec::Knn { k: 1 }, &blobs.features, &blobs.truth, 3).unwrap();
        let p = model.predict_proba(&blobs.test_features).unwrap();
        let acc = (0..40).filter(|&i| p.argmax(i) == blobs.test_truth[i]).count();
        assert_eq!(acc, 40);
    }

    #[test]
    fn split_class_counts_are_near_uniform() {
        let spec = PoolSpec {
            num_labeled: 400,
            num_pool: 400,
            num_test: 400,
            num_classes: 4,
            dim: 2,
            spread: 1.0,
            seed: 0,
        };
        for seed in 0..20 {
            let b = generate_blobs(&spec, seed).unwrap();
            let splits = [&b.truth[..400], &b.truth[400..], &b.test_truth[..]];
            for split in splits {
                for c in 0..4 {
                    let count = split.iter().filter(|&&y| y == c).count() as f64;
                    assert!((count - 100.0).abs() <= 20.0, "seed {seed} class {c}: {count}");
                }
            }
        }
    }

    #[test]
    fn annotator_noise_extremes() {
        let mut rng = item_rng(0, 0);
        for _ in 0..100 {
            assert_eq!(simulate_annotator_label(0.0, 2, 4, &mut rng), 2);
            assert_eq!(simulate_annotator_label(1.0, 0, 2, &mut rng), 1);
        }
    }

    #[test]
    fn annotator_noise_rate_and_uniform_flips() {
        let mut rng = item_rng(42, 0);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[simulate_annotator_label(0.15, 1, 4, &mut rng)] += 1;
        }
        let wrong = (draws - counts[1]) as f64 / draws as f64;
        assert!((wrong - 0.15).abs() < 0.005, "error rate {wrong}");
        let wrong_total = (draws - counts[1]) as f64;
        for c in [0, 2, 3] {
            let share = counts[c] as f64 / wrong_total;
            assert!((share - 1.0 / 3.0).abs() < 0.01, "class {c} share {share}");
        }
    }

    #[test]
    fn initial_pool_density() {
        let truth = vec![0; 20];
        let roster = AnnotatorConfig { initial_count: 3, ..Default::default() }.roster();
        let full = initialize_pools(30, 20, &truth, 2, &roster, 1.0, 1).unwrap();
        assert!((0..20).all(|i| full.count(i) == 3));
        assert!((20..30).all(|i| full.count(i) == 0));
        let sparse = initialize_pools(30, 20, &truth, 2, &roster, 1.0 / 3.0, 1).unwrap();
        assert!((0..20).all(|i| sparse.count(i) == 1));
        assert!(initialize_pools(30, 20, &truth, 2, &roster, 0.2, 1).is_err());
        assert!(initialize_pools(30, 20, &truth, 2, &[], 1.0, 1).is_err());
    }

    #[test]
    fn collected_labels_use_one_fresh_annotator() {
        let truth = vec![0, 1, 2, 0, 1];
        let roster = AnnotatorConfig { initial_count: 2, ..Default::default() }.roster();
        let table = initialize_pools(5, 3, &truth, 3, &roster, 1.0, 0).unwrap();
        let config = AnnotatorConfig {
            round_noise: vec![0.0],
            ..Default::default()
        };
        let mut source = SimulatedAnnotators::new(truth.clone(), 3, config, 9);
        let batch = Batch { examples: vec![4, 0, 3] };
        let labels = source.collect(&table, &batch, 0).unwrap();
        assert_eq!(labels.len(), 3);
        assert!(labels.iter().all(|&(_, j, _)| j == 2));
        assert!(labels.iter().all(|&(i, _, l)| l.index() == truth[i]));
        assert_eq!(labels, source.collect(&table, &batch, 0).unwrap());
    }

    #[test]
    fn recorded_source_skips_used_annotators() {
        let mut table = AnnotationTable::new(2, 2).unwrap();
        let l = |v| ClassLabel::new(v, 2).unwrap();
        table.add_annotation(0, 0, l(1)).unwrap();
        let mut source = RecordedAnnotations::new(2, &[(0, 0, l(0)), (0, 1, l(1)), (1, 1, l(0))]);
        assert!(source.can_label(&table, 0));
        let got = source.collect(&table, &Batch { examples: vec![0, 1] }, 0).unwrap();
        assert_eq!(got, vec![(0, 1, l(1)), (1, 1, l(0))]);
        table.add_all(&got).unwrap();
        assert!(!source.can_label(&table, 0));
        assert!(!source.can_label(&table, 1));
    }
}
