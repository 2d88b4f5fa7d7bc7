use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, ProbabilityMatrix};

use super::Classifier;

/// Euclidean k-nearest-neighbors with a `1/K` pseudo-count per class.
#[derive(Debug, Clone)]
pub struct Knn {
    neighbors: usize,
    num_classes: usize,
    train: FeatureMatrix,
    labels: Vec<usize>,
}

impl Knn {
    pub fn fit(neighbors: usize, x: &FeatureMatrix, y: &[usize], num_classes: usize) -> Result<Self> {
        if x.num_rows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if neighbors == 0 {
            return Err(Error::Config("knn needs k >= 1".into()));
        }
        Ok(Self {
            neighbors,
            num_classes,
            train: x.clone(),
            labels: y.to_vec(),
        })
    }

    /// Smoothed vote fractions from the labels of the chosen neighbors.
    pub fn smoothed_votes(neighbor_labels: &[usize], num_classes: usize) -> Vec<f64> {
        let prior = 1.0 / num_classes as f64;
        let total = neighbor_labels.len() as f64 + 1.0;
        let mut votes = vec![prior; num_classes];
        for &l in neighbor_labels {
            votes[l] += 1.0;
        }
        votes.iter_mut().for_each(|v| *v /= total);
        votes
    }
}

impl Classifier for Knn {
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<ProbabilityMatrix> {
        if x.dim() != self.train.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.train.dim(),
                got: x.dim(),
            });
        }
        let k = self.neighbors.min(self.train.num_rows());
        let mut data = Vec::with_capacity(x.num_rows() * self.num_classes);
        let mut dists: Vec<(f64, usize)> = Vec::with_capacity(self.train.num_rows());
        let mut chosen = Vec::with_capacity(k);
        for q in 0..x.num_rows() {
            let query = x.row(q);
            dists.clear();
            dists.extend((0..self.train.num_rows()).map(|t| {
                let d: f64 = query
                    .iter()
                    .zip(self.train.row(t))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, t)
            }));
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < dists.len() {
                dists.select_nth_unstable_by(k - 1, cmp);
            }
            chosen.clear();
            chosen.extend(dists[..k].iter().map(|&(_, t)| self.labels[t]));
            data.extend(Self::smoothed_votes(&chosen, self.num_classes));
        }
        Ok(ProbabilityMatrix::from_raw(self.num_classes, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_rule() {
        let v = Knn::smoothed_votes(&[0, 0, 0, 1, 1], 2);
        assert!((v[0] - 3.5 / 6.0).abs() < 1e-12);
        assert!((v[1] - 2.5 / 6.0).abs() < 1e-12);
        assert!((v[0] - 0.5833).abs() < 1e-4);
    }

    #[test]
    fn one_neighbor_recovers_training_label() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![5.0, 5.0], vec![10.0, 0.0]]).unwrap();
        let knn = Knn::fit(1, &x, &[2, 0, 1], 3).unwrap();
        let p = knn.predict_proba(&x).unwrap();
        for (i, &y) in [2, 0, 1].iter().enumerate() {
            assert_eq!(p.argmax(i), y);
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_ties_go_to_earlier_training_rows() {
        let x = FeatureMatrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let knn = Knn::fit(1, &x, &[0, 1], 2).unwrap();
        let q = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(knn.predict_proba(&q).unwrap().argmax(0), 0);
    }

    #[test]
    fn dimension_mismatch() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let knn = Knn::fit(3, &x, &[0], 2).unwrap();
        let q = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(knn.predict_proba(&q), Err(Error::DimensionMismatch { .. })));
    }
}
