//! Sparse example × annotator label table.
//!
//! Examples and annotators are dense indices. An example is *labeled* once it
//! holds at least one annotation; the rest form the unlabeled pool.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ProbabilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassLabel(usize);

impl ClassLabel {
    pub fn new(value: usize, num_classes: usize) -> Result<Self> {
        if value >= num_classes {
            return Err(Error::InvalidLabel {
                label: value,
                num_classes,
            });
        }
        Ok(Self(value))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One recorded label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub annotator: usize,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTable {
    num_classes: usize,
    /// Per example, annotations sorted by annotator index.
    by_example: Vec<Vec<Annotation>>,
    /// Per annotator, the examples they labeled (sorted).
    by_annotator: Vec<Vec<usize>>,
    total: usize,
}

impl AnnotationTable {
    pub fn new(num_examples: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self {
            num_classes,
            by_example: vec![Vec::new(); num_examples],
            by_annotator: Vec::new(),
            total: 0,
        })
    }

    pub fn num_examples(&self) -> usize {
        self.by_example.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of annotators `m`, including any registered without labels yet.
    pub fn num_annotators(&self) -> usize {
        self.by_annotator.len()
    }

    pub fn total_annotations(&self) -> usize {
        self.total
    }

    /// Registers a fresh annotator and returns its index.
    pub fn add_annotator(&mut self) -> usize {
        self.by_annotator.push(Vec::new());
        self.by_annotator.len() - 1
    }

    pub fn add_annotation(&mut self, example: usize, annotator: usize, label: ClassLabel) -> Result<()> {
        if example >= self.num_examples() {
            return Err(Error::UnknownExample {
                example,
                num_examples: self.num_examples(),
            });
        }
        if label.index() >= self.num_classes {
            return Err(Error::InvalidLabel {
                label: label.index(),
                num_classes: self.num_classes,
            });
        }
        let row = &mut self.by_example[example];
        let pos = match row.binary_search_by_key(&annotator, |a| a.annotator) {
            Ok(_) => return Err(Error::DuplicateAnnotation { example, annotator }),
            Err(pos) => pos,
        };
        row.insert(pos, Annotation { annotator, label });
        if annotator >= self.by_annotator.len() {
            self.by_annotator.resize(annotator + 1, Vec::new());
        }
        let examples = &mut self.by_annotator[annotator];
        let at = examples.partition_point(|&e| e < example);
        examples.insert(at, example);
        self.total += 1;
        Ok(())
    }

    /// Adds a batch atomically: either every annotation is recorded or none.
    pub fn add_all(&mut self, batch: &[(usize, usize, ClassLabel)]) -> Result<()> {
        let mut next = self.clone();
        for &(example, annotator, label) in batch {
            next.add_annotation(example, annotator, label)?;
        }
        *self = next;
        Ok(())
    }

    pub fn annotations(&self, example: usize) -> &[Annotation] {
        &self.by_example[example]
    }

    pub fn count(&self, example: usize) -> usize {
        self.by_example[example].len()
    }

    pub fn is_labeled(&self, example: usize) -> bool {
        !self.by_example[example].is_empty()
    }

    pub fn examples_of(&self, annotator: usize) -> &[usize] {
        &self.by_annotator[annotator]
    }

    pub fn label_of(&self, example: usize, annotator: usize) -> Option<ClassLabel> {
        let row = &self.by_example[example];
        row.binary_search_by_key(&annotator, |a| a.annotator)
            .ok()
            .map(|pos| row[pos].label)
    }

    pub fn labeled(&self) -> Vec<usize> {
        (0..self.num_examples()).filter(|&i| self.is_labeled(i)).collect()
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.num_examples()).filter(|&i| !self.is_labeled(i)).collect()
    }

    /// Examples with more than one annotation.
    pub fn multi_annotated(&self) -> Vec<usize> {
        (0..self.num_examples()).filter(|&i| self.count(i) > 1).collect()
    }

    /// Total annotation count per class across the whole table.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for a in self.by_example.iter().flatten() {
            counts[a.label.index()] += 1;
        }
        counts
    }

    /// The class with the most annotations overall; ties go to the smallest index.
    pub fn most_labeled_class(&self) -> Result<ClassLabel> {
        if self.total == 0 {
            return Err(Error::EmptyTable);
        }
        let counts = self.class_counts();
        let mut best = 0;
        for (k, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = k;
            }
        }
        Ok(ClassLabel(best))
    }

    /// Class frequencies among an example's annotations.
    pub fn empirical_distribution(&self, example: usize) -> Result<Vec<f64>> {
        let row = &self.by_example[example];
        if row.is_empty() {
            return Err(Error::Unlabeled(example));
        }
        let mut probs = vec![0.0; self.num_classes];
        for a in row {
            probs[a.label.index()] += 1.0;
        }
        let n = row.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        Ok(probs)
    }

    /// Plurality label per labeled example (`None` for unlabeled ones). Ties
    /// among plurality classes go to the highest `tie_breaker` probability,
    /// then to the smallest class index. Without a tie breaker only the index
    /// rule applies.
    pub fn majority_vote(&self, tie_breaker: Option<&ProbabilityMatrix>) -> Vec<Option<usize>> {
        let mut counts = vec![0usize; self.num_classes];
        (0..self.num_examples())
            .map(|i| {
                let row = &self.by_example[i];
                if row.is_empty() {
                    return None;
                }
                counts.iter_mut().for_each(|c| *c = 0);
                for a in row {
                    counts[a.label.index()] += 1;
                }
                let top = *counts.iter().max().unwrap();
                let probs = tie_breaker.map(|m| m.row(i));
                let mut best: Option<usize> = None;
                for k in (0..self.num_classes).filter(|&k| counts[k] == top) {
                    best = match (best, probs) {
                        (None, _) => Some(k),
                        (Some(b), Some(p)) if p[k] > p[b] => Some(k),
                        (b, _) => b,
                    };
                }
                best
            })
            .collect()
    }
}
