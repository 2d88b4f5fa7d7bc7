//! Acquisition scores. Lower scores are more informative; every scorer is
//! oriented so that the batch is always the `B` lowest-scored candidates.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotations::{Annotation, AnnotationTable};
use crate::consensus::{self, likelihood_at, ConsensusResult, TrustEstimates};
use crate::error::{Error, Result};
use crate::matrix::{argmax, max_value, safe_ln, ProbabilityMatrix};
use crate::par;
use crate::seed::item_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Activelab,
    ActivelabEnsemble,
    ActivelabSingle,
    Random,
    GoodRandom,
    Entropy,
    Uncertainty,
    Alc,
    Disagreement,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 9] = [
        ScorerKind::Activelab,
        ScorerKind::ActivelabEnsemble,
        ScorerKind::ActivelabSingle,
        ScorerKind::Random,
        ScorerKind::GoodRandom,
        ScorerKind::Entropy,
        ScorerKind::Uncertainty,
        ScorerKind::Alc,
        ScorerKind::Disagreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Activelab => "activelab",
            ScorerKind::ActivelabEnsemble => "activelab_ensemble",
            ScorerKind::ActivelabSingle => "activelab_single",
            ScorerKind::Random => "random",
            ScorerKind::GoodRandom => "good_random",
            ScorerKind::Entropy => "entropy",
            ScorerKind::Uncertainty => "uncertainty",
            ScorerKind::Alc => "alc",
            ScorerKind::Disagreement => "disagreement",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(" | ")
    }

    pub fn is_activelab(self) -> bool {
        matches!(
            self,
            ScorerKind::Activelab | ScorerKind::ActivelabEnsemble | ScorerKind::ActivelabSingle
        )
    }

    /// Minimum number of classifiers the scorer needs.
    pub fn min_models(self) -> usize {
        match self {
            ScorerKind::ActivelabEnsemble | ScorerKind::Disagreement => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scorer `{s}`; expected one of: {}",
                    Self::valid_names()
                ))
            })
    }
}

/// How the committee disagreement score is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementForm {
    /// Mean soft cross-entropy between each model and the committee mean.
    #[default]
    CrossEntropy,
    /// Mean inner product with the committee mean (no logarithm).
    Product,
}

#[inline]
fn weighted_or_uniform(numerator: f64, denominator: f64, num_classes: usize) -> f64 {
    if denominator > 0.0 {
        (numerator / denominator).clamp(0.0, 1.0)
    } else {
        1.0 / num_classes as f64
    }
}

/// ActiveLab score for an annotated example with consensus class `consensus`.
pub fn activelab_labeled(
    annotations: &[Annotation],
    consensus: usize,
    model_probs: &[f64],
    trust: &TrustEstimates,
) -> f64 {
    activelab_ensemble_labeled(annotations, consensus, &[model_probs], &trust.model_weights[..1], trust)
}

/// ActiveLab score for an example without annotations.
pub fn activelab_unlabeled(model_probs: &[f64], trust: &TrustEstimates) -> f64 {
    let k = model_probs.len();
    let w_model = trust.model_weight();
    let w_avg = trust.avg_annotator_weight;
    weighted_or_uniform(
        w_model * max_value(model_probs) + w_avg / k as f64,
        w_model + w_avg,
        k,
    )
}

/// Ensemble ActiveLab score for an annotated example; `model_weights[l]`
/// pairs with `per_model[l]`.
pub fn activelab_ensemble_labeled(
    annotations: &[Annotation],
    consensus: usize,
    per_model: &[&[f64]],
    model_weights: &[f64],
    trust: &TrustEstimates,
) -> f64 {
    let k = per_model[0].len();
    let p = trust.agreement_prob;
    let w_avg = trust.avg_annotator_weight;
    let mut num = w_avg / k as f64;
    let mut den = w_avg;
    for (probs, &w) in per_model.iter().zip(model_weights) {
        num += w * probs[consensus];
        den += w;
    }
    for a in annotations {
        let w = trust.annotator_weights[a.annotator];
        num += w * likelihood_at(a.label.index(), consensus, p, k);
        den += w;
    }
    weighted_or_uniform(num, den, k)
}

/// Ensemble ActiveLab score for an unannotated example, using the weighted
/// committee's predicted class as a proxy label.
pub fn activelab_ensemble_unlabeled(per_model: &[&[f64]], model_weights: &[f64], trust: &TrustEstimates) -> f64 {
    let k = per_model[0].len();
    let total: f64 = model_weights.iter().sum();
    let mut mean = vec![0.0; k];
    for (probs, &w) in per_model.iter().zip(model_weights) {
        let w = if total > 0.0 { w } else { 1.0 };
        for (m, &v) in mean.iter_mut().zip(probs.iter()) {
            *m += w * v;
        }
    }
    let proxy = argmax(&mean);
    let w_avg = trust.avg_annotator_weight;
    let mut num = w_avg / k as f64;
    let mut den = w_avg;
    for (probs, &w) in per_model.iter().zip(model_weights) {
        num += w * probs[proxy];
        den += w;
    }
    weighted_or_uniform(num, den, k)
}

/// Score for single-label active learning, where trust weights are undefined.
pub fn activelab_single_label(model_probs: &[f64]) -> f64 {
    (max_value(model_probs) + 1.0 / model_probs.len() as f64) / 2.0
}

/// Uniform draw in `[0, 1)` from the stream for `example` under `seed`.
pub fn random_score(seed: u64, example: usize) -> f64 {
    item_rng(seed, example as u64).random::<f64>()
}

pub fn good_random_score(seed: u64, example: usize, num_annotations: usize) -> f64 {
    random_score(seed, example) + num_annotations as f64
}

/// Negative entropy, `Σ p ln p`.
pub fn entropy_score(model_probs: &[f64]) -> f64 {
    model_probs.iter().map(|&p| p * safe_ln(p)).sum()
}

pub fn uncertainty_score(model_probs: &[f64]) -> f64 {
    max_value(model_probs)
}

/// Active label cleaning priority, negated for lowest-first selection:
/// `-(Σ p ln p - Σ p_emp ln p)`.
pub fn alc_score(model_probs: &[f64], empirical: &[f64]) -> f64 {
    let cross: f64 = empirical
        .iter()
        .zip(model_probs)
        .map(|(&e, &p)| e * safe_ln(p))
        .sum();
    -(entropy_score(model_probs) - cross)
}

/// Committee disagreement. The cross-entropy form is `(1/L) Σ_l Σ_k p_lk ln p̄_k`
/// (more negative means more disagreement); the product form is
/// `(1/L) Σ_l Σ_k p_lk p̄_k`, which is also smallest under disagreement.
pub fn disagreement_score(per_model: &[&[f64]], form: DisagreementForm) -> Result<f64> {
    if per_model.len() < 2 {
        return Err(Error::TooFewModels {
            scorer: "disagreement",
            needed: 2,
            got: per_model.len(),
        });
    }
    let l = per_model.len() as f64;
    let k = per_model[0].len();
    let mean: Vec<f64> = (0..k)
        .map(|c| per_model.iter().map(|p| p[c]).sum::<f64>() / l)
        .collect();
    let term = |p: f64, m: f64| match form {
        DisagreementForm::CrossEntropy => p * safe_ln(m),
        DisagreementForm::Product => p * m,
    };
    let total: f64 = per_model
        .iter()
        .map(|probs| probs.iter().zip(&mean).map(|(&p, &m)| term(p, m)).sum::<f64>())
        .sum();
    Ok(total / l)
}

/// One score per example in the table (labeled and unlabeled alike).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub kind: ScorerKind,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    /// Selected examples in ascending score order.
    pub examples: Vec<usize>,
}

/// The `batch_size` lowest-scored candidates; score ties go to the smaller
/// example index.
pub fn select_batch(scores: &[f64], batch_size: usize, candidates: &[usize]) -> Batch {
    let mut ranked: Vec<usize> = candidates.to_vec();
    ranked.sort_unstable();
    ranked.dedup();
    ranked.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    if ranked.len() < batch_size {
        log::warn!(
            "only {} candidates for a batch of {}; selecting all of them",
            ranked.len(),
            batch_size
        );
    }
    ranked.truncate(batch_size);
    Batch { examples: ranked }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub disagreement_form: DisagreementForm,
    /// Score only for single-label active learning (ActiveLab uses its
    /// weight-free form).
    pub single_label: bool,
}

/// Everything a scoring pass produced.
#[derive(Debug, Clone)]
pub struct Scored {
    pub scores: ScoreVector,
    /// Present for ActiveLab scorers outside single-label mode.
    pub trust: Option<TrustEstimates>,
    pub consensus: Option<ConsensusResult>,
}

/// Scores every example of `table` with `kind`.
///
/// `preds` holds one calibrated matrix per model, rows indexed by example
/// (out-of-sample for labeled rows). `seed` feeds the random scorers.
pub fn score_examples(
    kind: ScorerKind,
    table: &AnnotationTable,
    preds: &[ProbabilityMatrix],
    options: &ScoringOptions,
    seed: u64,
) -> Result<Scored> {
    if preds.len() < kind.min_models() {
        return Err(Error::TooFewModels {
            scorer: kind.name(),
            needed: kind.min_models(),
            got: preds.len(),
        });
    }
    let n = table.num_examples();
    for p in preds {
        if p.num_rows() != n || p.num_classes() != table.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.num_rows(),
            });
        }
    }
    let refs: Vec<&ProbabilityMatrix> = preds.iter().collect();
    let mean_storage;
    let model: &ProbabilityMatrix = if preds.len() == 1 {
        &preds[0]
    } else {
        mean_storage = ProbabilityMatrix::weighted_mean(&refs, &vec![1.0; refs.len()]);
        &mean_storage
    };

    let use_single = kind == ScorerKind::ActivelabSingle || (kind.is_activelab() && options.single_label);
    let mut trust = None;
    let mut consensus = None;

    let scores: Vec<f64> = if use_single {
        par::map_range(n, |i| activelab_single_label(model.row(i)))
    } else {
        match kind {
            ScorerKind::Activelab => {
                let t = consensus::fit_trust(table, &[model])?;
                let c = consensus::crowdlab_consensus(table, model, &t);
                let s = par::map_range(n, |i| match c.labels[i] {
                    Some(y) => activelab_labeled(table.annotations(i), y, model.row(i), &t),
                    None => activelab_unlabeled(model.row(i), &t),
                });
                trust = Some(t);
                consensus = Some(c);
                s
            }
            ScorerKind::ActivelabEnsemble => {
                let t = consensus::fit_trust(table, &refs)?;
                let c = consensus::crowdlab_consensus_ensemble(table, &refs, &t)?;
                let s = par::map_range(n, |i| {
                    let rows: Vec<&[f64]> = preds.iter().map(|p| p.row(i)).collect();
                    match c.labels[i] {
                        Some(y) => activelab_ensemble_labeled(table.annotations(i), y, &rows, &t.model_weights, &t),
                        None => activelab_ensemble_unlabeled(&rows, &t.model_weights, &t),
                    }
                });
                trust = Some(t);
                consensus = Some(c);
                s
            }
            ScorerKind::ActivelabSingle => unreachable!(),
            ScorerKind::Random => par::map_range(n, |i| random_score(seed, i)),
            ScorerKind::GoodRandom => par::map_range(n, |i| good_random_score(seed, i, table.count(i))),
            ScorerKind::Entropy => par::map_range(n, |i| entropy_score(model.row(i))),
            ScorerKind::Uncertainty => par::map_range(n, |i| uncertainty_score(model.row(i))),
            ScorerKind::Alc => par::map_range(n, |i| match table.empirical_distribution(i) {
                Ok(emp) => alc_score(model.row(i), &emp),
                Err(_) => entropy_score(model.row(i)),
            }),
            ScorerKind::Disagreement => par::try_collect(par::map_range(n, |i| {
                let rows: Vec<&[f64]> = preds.iter().map(|p| p.row(i)).collect();
                disagreement_score(&rows, options.disagreement_form)
            }))?,
        }
    };

    debug_assert!(scores.iter().all(|s| s.is_finite()));
    Ok(Scored {
        scores: ScoreVector { kind, scores },
        trust,
        consensus,
    })
}
