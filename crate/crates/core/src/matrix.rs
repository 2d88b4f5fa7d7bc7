//! Row-major feature and probability matrices.

use crate::error::{Error, Result};

/// Floor applied to probabilities before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance for a row of probabilities to count as a distribution.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

pub fn safe_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn max_value(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Numerically stable softmax of `values / temperature`.
pub fn softmax_scaled(values: &[f64], temperature: f64) -> Vec<f64> {
    let top = max_value(values);
    let mut out: Vec<f64> = values
        .iter()
        .map(|&v| ((v - top) / temperature).exp())
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite feature in row {}",
                pos / dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            dim: self.dim,
            data,
        }
    }
}

/// One class-probability vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    num_classes: usize,
    data: Vec<f64>,
}

impl ProbabilityMatrix {
    /// Validates that every row is a distribution (nonnegative, sums to 1).
    pub fn new(num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if num_classes < 2 || !data.len().is_multiple_of(num_classes) {
            return Err(Error::DimensionMismatch {
                expected: num_classes,
                got: data.len(),
            });
        }
        let m = Self { num_classes, data };
        for i in 0..m.num_rows() {
            let row = m.row(i);
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidProbabilities {
                    row: i,
                    reason: "entries must be finite and nonnegative".into(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidProbabilities {
                    row: i,
                    reason: format!("row sums to {sum}"),
                });
            }
        }
        Ok(m)
    }

    pub fn from_rows(num_classes: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * num_classes);
        for row in rows {
            if row.len() != num_classes {
                return Err(Error::DimensionMismatch {
                    expected: num_classes,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(num_classes, data)
    }

    pub fn uniform(num_rows: usize, num_classes: usize) -> Self {
        Self {
            num_classes,
            data: vec![1.0 / num_classes as f64; num_rows * num_classes],
        }
    }

    pub(crate) fn from_raw(num_classes: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len() % num_classes, 0);
        Self { num_classes, data }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.num_classes)
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        self.data[i * self.num_classes..(i + 1) * self.num_classes].copy_from_slice(values);
    }

    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    pub fn select(&self, rows: &[usize]) -> ProbabilityMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.num_classes);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self::from_raw(self.num_classes, data)
    }

    /// Row-wise weighted mean of several matrices with identical shape.
    /// Nonpositive total weight falls back to the unweighted mean.
    pub fn weighted_mean(mats: &[&ProbabilityMatrix], weights: &[f64]) -> ProbabilityMatrix {
        assert!(!mats.is_empty(), "weighted_mean of zero matrices");
        assert_eq!(mats.len(), weights.len());
        let total: f64 = weights.iter().sum();
        let uniform;
        let (weights, total) = if total > 0.0 {
            (weights, total)
        } else {
            uniform = vec![1.0; mats.len()];
            (&uniform[..], mats.len() as f64)
        };
        let len = mats[0].data.len();
        let mut data = vec![0.0; len];
        for (m, &w) in mats.iter().zip(weights) {
            assert_eq!(m.data.len(), len, "matrix shapes differ");
            for (acc, v) in data.iter_mut().zip(&m.data) {
                *acc += w * v;
            }
        }
        data.iter_mut().for_each(|v| *v /= total);
        Self::from_raw(mats[0].num_classes, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_to_smallest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(ProbabilityMatrix::new(2, vec![0.5, 0.6]).is_err());
        assert!(ProbabilityMatrix::new(2, vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityMatrix::new(2, vec![0.5, 0.5, 1.0]).is_err());
        assert!(ProbabilityMatrix::new(2, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn weighted_mean_rows() {
        let a = ProbabilityMatrix::from_rows(2, &[vec![0.8, 0.2]]).unwrap();
        let b = ProbabilityMatrix::from_rows(2, &[vec![0.4, 0.6]]).unwrap();
        let m = ProbabilityMatrix::weighted_mean(&[&a, &b], &[1.0, 1.0]);
        assert!((m.row(0)[0] - 0.6).abs() < 1e-12);
        let z = ProbabilityMatrix::weighted_mean(&[&a, &b], &[0.0, 0.0]);
        assert_eq!(z, m);
        let first = ProbabilityMatrix::weighted_mean(&[&a, &b], &[1.0, 0.0]);
        assert_eq!(first.row(0), a.row(0));
    }

    #[test]
    fn softmax_of_equal_values_is_uniform() {
        for t in [0.01, 1.0, 100.0] {
            let s = softmax_scaled(&[0.3, 0.3, 0.3], t);
            assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }
}
