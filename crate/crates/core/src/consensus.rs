//! Annotator/model trust estimation and weighted-ensemble consensus labels.
//!
//! Trust is fitted in a single pass: majority-vote consensus first, then
//! agreement statistics over the multiply-annotated subset, then weights.
//! Consensus labels are the argmax of a weighted average of the classifier's
//! class probabilities and one likelihood vector per annotation.

use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotationTable, ClassLabel};
use crate::error::{Error, Result};
use crate::matrix::{argmax, ProbabilityMatrix};

/// Lower bound on `1 - A_MLC` before it is used as a divisor.
pub const MIN_BASELINE_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustEstimates {
    /// Probability a typical annotator picks the consensus label (`P`).
    pub agreement_prob: f64,
    /// Per-annotator weight `w_j`, indexed by annotator.
    pub annotator_weights: Vec<f64>,
    /// Mean of `annotator_weights` over all annotators.
    pub avg_annotator_weight: f64,
    /// One weight per classifier; a single entry outside ensemble runs.
    pub model_weights: Vec<f64>,
    /// Per-annotator agreement `g_j` with co-annotators.
    pub agreements: Vec<f64>,
    /// Per-classifier accuracy against consensus.
    pub model_accuracies: Vec<f64>,
    /// Accuracy of always predicting the most-labeled class.
    pub baseline_accuracy: f64,
    /// Set when no example had more than one annotation and the estimates
    /// come from the single-annotation fallback.
    pub fallback: bool,
}

impl TrustEstimates {
    pub fn model_weight(&self) -> f64 {
        self.model_weights[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusResult {
    /// Consensus class per example; `None` for unlabeled examples.
    pub labels: Vec<Option<usize>>,
    /// Normalized aggregate class probabilities per labeled example.
    pub aggregate: Vec<Option<Vec<f64>>>,
}

impl ConsensusResult {
    pub fn confidence(&self, example: usize) -> Option<f64> {
        let label = self.labels[example]?;
        self.aggregate[example].as_ref().map(|p| p[label])
    }
}

/// Likelihood vector for an annotator who chose `label`.
pub fn annotator_likelihood(label: ClassLabel, agreement_prob: f64, num_classes: usize) -> Vec<f64> {
    (0..num_classes)
        .map(|k| likelihood_at(label.index(), k, agreement_prob, num_classes))
        .collect()
}

#[inline]
pub fn likelihood_at(chosen: usize, class: usize, agreement_prob: f64, num_classes: usize) -> f64 {
    if chosen == class {
        agreement_prob
    } else {
        (1.0 - agreement_prob) / (num_classes - 1) as f64
    }
}

/// Agreement of one annotator with the others on shared examples, or `None`
/// when they never co-annotated anything.
pub fn agreement(table: &AnnotationTable, annotator: usize) -> Option<f64> {
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for &i in table.examples_of(annotator) {
        let mine = table.label_of(i, annotator)?;
        for other in table.annotations(i) {
            if other.annotator != annotator {
                pairs += 1;
                agree += usize::from(other.label == mine);
            }
        }
    }
    (pairs > 0).then(|| agree as f64 / pairs as f64)
}

/// Mean fraction of annotations matching consensus over multiply-annotated
/// examples; `None` when there are none.
pub fn estimate_agreement_prob(table: &AnnotationTable, consensus: &[Option<usize>]) -> Option<f64> {
    let subset = table.multi_annotated();
    if subset.is_empty() {
        return None;
    }
    let total: f64 = subset
        .iter()
        .map(|&i| {
            let target = consensus[i].expect("consensus for labeled example");
            let anns = table.annotations(i);
            let hits = anns.iter().filter(|a| a.label.index() == target).count();
            hits as f64 / anns.len() as f64
        })
        .sum();
    Some(total / subset.len() as f64)
}

fn fraction_matching(subset: &[usize], consensus: &[Option<usize>], predicted: impl Fn(usize) -> usize) -> f64 {
    let hits = subset
        .iter()
        .filter(|&&i| consensus[i] == Some(predicted(i)))
        .count();
    hits as f64 / subset.len() as f64
}

/// Classifier accuracy against consensus over multiply-annotated examples.
pub fn model_accuracy(
    table: &AnnotationTable,
    consensus: &[Option<usize>],
    preds: &ProbabilityMatrix,
) -> Option<f64> {
    let subset = table.multi_annotated();
    (!subset.is_empty()).then(|| fraction_matching(&subset, consensus, |i| preds.argmax(i)))
}

/// Accuracy of predicting the most-labeled class, over multiply-annotated examples.
pub fn baseline_accuracy(table: &AnnotationTable, consensus: &[Option<usize>]) -> Result<Option<f64>> {
    let mlc = table.most_labeled_class()?.index();
    let subset = table.multi_annotated();
    Ok((!subset.is_empty()).then(|| fraction_matching(&subset, consensus, |_| mlc)))
}

fn baseline_gap(baseline_accuracy: f64) -> f64 {
    (1.0 - baseline_accuracy).max(MIN_BASELINE_GAP)
}

pub fn annotator_weight(agreement: f64, baseline_accuracy: f64) -> f64 {
    (1.0 - (1.0 - agreement) / baseline_gap(baseline_accuracy)).max(0.0)
}

pub fn model_weight(model_accuracy: f64, baseline_accuracy: f64, table: &AnnotationTable) -> f64 {
    let labeled = table.labeled();
    let mean_count = if labeled.is_empty() {
        0.0
    } else {
        table.total_annotations() as f64 / labeled.len() as f64
    };
    let normalized = (1.0 - (1.0 - model_accuracy) / baseline_gap(baseline_accuracy)).max(0.0);
    normalized * mean_count.sqrt()
}

/// Fits all trust quantities from annotations and one prediction matrix per
/// model (rows indexed by example; only labeled rows are read).
pub fn fit_trust(table: &AnnotationTable, preds_per_model: &[&ProbabilityMatrix]) -> Result<TrustEstimates> {
    let first = *preds_per_model.first().ok_or(Error::TooFewModels {
        scorer: "trust fitting",
        needed: 1,
        got: 0,
    })?;
    if table.total_annotations() == 0 {
        return Err(Error::EmptyTable);
    }
    let k = table.num_classes();
    let consensus = table.majority_vote(Some(first));
    let m = table.num_annotators();

    let (agreement_prob, agreements, model_accuracies, baseline, fallback) =
        match estimate_agreement_prob(table, &consensus) {
            Some(p) => {
                let agreements: Vec<f64> = (0..m).map(|j| agreement(table, j).unwrap_or(p)).collect();
                let accs: Vec<f64> = preds_per_model
                    .iter()
                    .map(|preds| model_accuracy(table, &consensus, preds).expect("nonempty subset"))
                    .collect();
                let baseline = baseline_accuracy(table, &consensus)?.expect("nonempty subset");
                (p, agreements, accs, baseline, false)
            }
            None => {
                // Every labeled example has exactly one annotation: measure
                // against those single labels over the whole labeled set.
                let labeled = table.labeled();
                let mlc = table.most_labeled_class()?.index();
                let accs: Vec<f64> = preds_per_model
                    .iter()
                    .map(|preds| fraction_matching(&labeled, &consensus, |i| preds.argmax(i)))
                    .collect();
                let baseline = fraction_matching(&labeled, &consensus, |_| mlc);
                let p = accs[0].clamp(1.0 / k as f64, 1.0);
                (p, vec![p; m], accs, baseline, true)
            }
        };

    let annotator_weights: Vec<f64> = agreements
        .iter()
        .map(|&g| annotator_weight(g, baseline))
        .collect();
    let avg_annotator_weight = if m == 0 {
        0.0
    } else {
        annotator_weights.iter().sum::<f64>() / m as f64
    };
    let model_weights = model_accuracies
        .iter()
        .map(|&a| model_weight(a, baseline, table))
        .collect();

    Ok(TrustEstimates {
        agreement_prob,
        annotator_weights,
        avg_annotator_weight,
        model_weights,
        agreements,
        model_accuracies,
        baseline_accuracy: baseline,
        fallback,
    })
}

/// Single-model consensus: uses the first model weight in `trust`.
pub fn crowdlab_consensus(
    table: &AnnotationTable,
    preds: &ProbabilityMatrix,
    trust: &TrustEstimates,
) -> ConsensusResult {
    weighted_consensus(table, &[preds], &trust.model_weights[..1], trust)
}

/// Ensemble consensus with one weight per model.
pub fn crowdlab_consensus_ensemble(
    table: &AnnotationTable,
    preds_per_model: &[&ProbabilityMatrix],
    trust: &TrustEstimates,
) -> Result<ConsensusResult> {
    if preds_per_model.is_empty() || preds_per_model.len() != trust.model_weights.len() {
        return Err(Error::TooFewModels {
            scorer: "ensemble consensus",
            needed: trust.model_weights.len().max(1),
            got: preds_per_model.len(),
        });
    }
    Ok(weighted_consensus(table, preds_per_model, &trust.model_weights, trust))
}

fn weighted_consensus(
    table: &AnnotationTable,
    models: &[&ProbabilityMatrix],
    model_weights: &[f64],
    trust: &TrustEstimates,
) -> ConsensusResult {
    let k = table.num_classes();
    let p = trust.agreement_prob;
    let mut fallback_votes: Option<Vec<Option<usize>>> = None;
    let mut labels = vec![None; table.num_examples()];
    let mut aggregate = vec![None; table.num_examples()];

    for i in 0..table.num_examples() {
        let anns = table.annotations(i);
        if anns.is_empty() {
            continue;
        }
        let mut agg = vec![0.0; k];
        let mut total = 0.0;
        for (preds, &w) in models.iter().zip(model_weights) {
            if w > 0.0 {
                for (acc, &v) in agg.iter_mut().zip(preds.row(i)) {
                    *acc += w * v;
                }
                total += w;
            }
        }
        for a in anns {
            let w = trust.annotator_weights[a.annotator];
            if w > 0.0 {
                for (c, acc) in agg.iter_mut().enumerate() {
                    *acc += w * likelihood_at(a.label.index(), c, p, k);
                }
                total += w;
            }
        }
        if total > 0.0 {
            agg.iter_mut().for_each(|v| *v /= total);
            labels[i] = Some(argmax(&agg));
        } else {
            let votes = fallback_votes.get_or_insert_with(|| table.majority_vote(Some(models[0])));
            agg = vec![1.0 / k as f64; k];
            labels[i] = votes[i];
        }
        aggregate[i] = Some(agg);
    }
    ConsensusResult { labels, aggregate }
}
