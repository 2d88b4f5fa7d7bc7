//! Pluggable classifiers and out-of-sample prediction.
//!
//! Built-ins are k-nearest-neighbors and softmax regression. Out-of-sample
//! predictions for labeled examples come from k-fold cross-validation; rows
//! outside the training set are predicted by averaging the fold models.

pub mod knn;
pub mod softmax;

use std::fmt;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, ProbabilityMatrix};
use crate::par;
use crate::seed::item_rng;

pub use knn::Knn;
pub use softmax::{loss_and_gradient, SoftmaxParams, SoftmaxRegression};

pub const DEFAULT_FOLDS: usize = 5;

pub trait Classifier: Send + Sync {
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<ProbabilityMatrix>;
}

fn default_neighbors() -> usize {
    5
}
fn default_learning_rate() -> f64 {
    SoftmaxParams::default().learning_rate
}
fn default_epochs() -> usize {
    SoftmaxParams::default().epochs
}
fn default_l2() -> f64 {
    SoftmaxParams::default().l2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Knn {
        #[serde(default = "default_neighbors")]
        k: usize,
    },
    SoftmaxRegression {
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_l2")]
        l2: f64,
    },
    /// Predictions read from a CSV file instead of a trained model.
    External { path: PathBuf },
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        let p = SoftmaxParams::default();
        ClassifierSpec::SoftmaxRegression {
            learning_rate: p.learning_rate,
            epochs: p.epochs,
            l2: p.l2,
        }
    }
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::SoftmaxRegression { .. } => "softmax_regression",
            ClassifierSpec::External { .. } => "external",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ClassifierSpec::Knn { k: 0 } => Err(Error::Config("knn.k must be positive".into())),
            ClassifierSpec::SoftmaxRegression { learning_rate, l2, .. } if !(learning_rate > 0.0) || l2 < 0.0 => Err(
                Error::Config("softmax_regression needs learning_rate > 0 and l2 >= 0".into()),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fits a built-in classifier on `(x, y)`.
pub fn train(spec: &ClassifierSpec, x: &FeatureMatrix, y: &[usize], num_classes: usize) -> Result<Box<dyn Classifier>> {
    if x.num_rows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    match *spec {
        ClassifierSpec::Knn { k } => Ok(Box::new(Knn::fit(k, x, y, num_classes)?)),
        ClassifierSpec::SoftmaxRegression { learning_rate, epochs, l2 } => Ok(Box::new(SoftmaxRegression::fit(
            SoftmaxParams { learning_rate, epochs, l2 },
            x,
            y,
            num_classes,
        )?)),
        ClassifierSpec::External { .. } => Err(Error::Config(
            "external classifiers supply predictions from a file and cannot be trained".into(),
        )),
    }
}

/// Models fitted on each cross-validation fold.
pub struct FoldModels {
    models: Vec<Box<dyn Classifier>>,
}

impl FoldModels {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Assigns each row to a fold. Assignment depends on example ids, not row
/// order: ids are sorted, shuffled with `seed`, then split contiguously.
pub fn fold_assignment(ids: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&r| ids[r]);
    order.shuffle(&mut item_rng(seed, 0));
    let mut fold_of = vec![0; n];
    for f in 0..folds {
        for &r in &order[f * n / folds..(f + 1) * n / folds] {
            fold_of[r] = f;
        }
    }
    fold_of
}

/// Out-of-sample predictions for every row of `x` (aligned with the input
/// order) plus the fold models. `ids` are stable example identifiers used
/// for fold assignment and canonical training order.
pub fn cross_val_oos(
    spec: &ClassifierSpec,
    x: &FeatureMatrix,
    ids: &[usize],
    y: &[usize],
    num_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<(ProbabilityMatrix, FoldModels)> {
    let n = x.num_rows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    assert_eq!(ids.len(), n);
    assert_eq!(y.len(), n);
    let folds = if n < folds {
        log::warn!("{n} labeled examples is fewer than {folds} folds; using {n}");
        n
    } else {
        folds.max(1)
    };
    if folds < 2 {
        log::warn!("a single labeled example cannot be held out; predictions are in-sample");
        let model = train(spec, x, y, num_classes)?;
        let preds = model.predict_proba(x)?;
        return Ok((preds, FoldModels { models: vec![model] }));
    }

    let fold_of = fold_assignment(ids, folds, seed);
    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by_key(|&r| ids[r]);

    let fitted = par::map_range(folds, |f| -> Result<(Box<dyn Classifier>, Vec<usize>, ProbabilityMatrix)> {
        let train_rows: Vec<usize> = canonical.iter().copied().filter(|&r| fold_of[r] != f).collect();
        let held_out: Vec<usize> = canonical.iter().copied().filter(|&r| fold_of[r] == f).collect();
        let ys: Vec<usize> = train_rows.iter().map(|&r| y[r]).collect();
        let model = train(spec, &x.select(&train_rows), &ys, num_classes)?;
        let preds = model.predict_proba(&x.select(&held_out))?;
        Ok((model, held_out, preds))
    });

    let mut out = ProbabilityMatrix::uniform(n, num_classes);
    let mut models = Vec::with_capacity(folds);
    for result in fitted {
        let (model, rows, preds) = result?;
        for (j, &r) in rows.iter().enumerate() {
            out.set_row(r, preds.row(j));
        }
        models.push(model);
    }
    Ok((out, FoldModels { models }))
}

/// A row for every example of `x`: out-of-sample for rows with a label,
/// the fold-model average for the rest. Row indices double as example ids.
pub fn predict_all(
    spec: &ClassifierSpec,
    x: &FeatureMatrix,
    labels: &[Option<usize>],
    num_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<(ProbabilityMatrix, FoldModels)> {
    let n = x.num_rows();
    assert_eq!(labels.len(), n);
    let train_rows: Vec<usize> = (0..n).filter(|&i| labels[i].is_some()).collect();
    let other_rows: Vec<usize> = (0..n).filter(|&i| labels[i].is_none()).collect();
    let y: Vec<usize> = train_rows.iter().filter_map(|&i| labels[i]).collect();
    let (oos, models) = cross_val_oos(spec, &x.select(&train_rows), &train_rows, &y, num_classes, folds, seed)?;
    let mut full = ProbabilityMatrix::uniform(n, num_classes);
    for (r, &i) in train_rows.iter().enumerate() {
        full.set_row(i, oos.row(r));
    }
    if !other_rows.is_empty() {
        let pool = predict_pool(&models, &x.select(&other_rows))?;
        for (r, &i) in other_rows.iter().enumerate() {
            full.set_row(i, pool.row(r));
        }
    }
    Ok((full, models))
}

/// Unweighted mean of the fold models' predictions.
pub fn predict_pool(models: &FoldModels, x: &FeatureMatrix) -> Result<ProbabilityMatrix> {
    let preds = par::try_collect(par::map_slice(&models.models, |m| m.predict_proba(x)))?;
    let refs: Vec<&ProbabilityMatrix> = preds.iter().collect();
    Ok(ProbabilityMatrix::weighted_mean(&refs, &vec![1.0; refs.len()]))
}

/// Weighted mean of per-model predictions; all-zero weights fall back to the
/// unweighted mean.
pub fn ensemble_predict(per_model: &[&ProbabilityMatrix], weights: &[f64]) -> ProbabilityMatrix {
    ProbabilityMatrix::weighted_mean(per_model, weights)
}
