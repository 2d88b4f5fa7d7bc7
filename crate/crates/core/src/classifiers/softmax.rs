use crate::error::{Error, Result};
use crate::matrix::{softmax_scaled, FeatureMatrix, ProbabilityMatrix};

use super::Classifier;

/// Multinomial logistic regression trained by full-batch gradient descent on
/// standardized features. Parameters start at zero, so fitting is fully
/// deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    num_classes: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Row-major `K × d` weights followed by `K` biases.
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for SoftmaxParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 300,
            l2: 1e-4,
        }
    }
}

fn logits(params: &[f64], row: &[f64], num_classes: usize, out: &mut [f64]) {
    let d = row.len();
    let bias = &params[num_classes * d..];
    for (c, o) in out.iter_mut().enumerate() {
        let w = &params[c * d..(c + 1) * d];
        *o = bias[c] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Mean cross-entropy plus `l2/2 · ||W||²` (biases unpenalized), and its gradient.
pub fn loss_and_gradient(params: &[f64], x: &FeatureMatrix, y: &[usize], num_classes: usize, l2: f64) -> (f64, Vec<f64>) {
    let d = x.dim();
    let n = x.num_rows() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; num_classes];
    for i in 0..x.num_rows() {
        let row = x.row(i);
        logits(params, row, num_classes, &mut z);
        let p = softmax_scaled(&z, 1.0);
        loss -= p[y[i]].max(f64::MIN_POSITIVE).ln();
        for c in 0..num_classes {
            let r = p[c] - f64::from(u8::from(c == y[i]));
            let g = &mut grad[c * d..(c + 1) * d];
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            grad[num_classes * d + c] += r;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let weights = &params[..num_classes * d];
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += l2 * w;
    }
    (loss, grad)
}

impl SoftmaxRegression {
    pub fn fit(config: SoftmaxParams, x: &FeatureMatrix, y: &[usize], num_classes: usize) -> Result<Self> {
        let n = x.num_rows();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let d = x.dim();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut scale = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in scale.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in scale.iter_mut() {
            let sd = (*s / n as f64).sqrt();
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
        let mut model = Self {
            num_classes,
            mean,
            scale,
            params: vec![0.0; num_classes * d + num_classes],
        };
        let xs = model.standardize(x);
        for _ in 0..config.epochs {
            let (_, grad) = loss_and_gradient(&model.params, &xs, y, num_classes, config.l2);
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        Ok(model)
    }

    fn standardize(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let d = x.dim();
        let mut data = Vec::with_capacity(x.num_rows() * d);
        for i in 0..x.num_rows() {
            data.extend(
                x.row(i)
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s),
            );
        }
        FeatureMatrix::new(d, data).expect("standardized features stay finite")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }
}

impl Classifier for SoftmaxRegression {
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<ProbabilityMatrix> {
        if x.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.dim(),
            });
        }
        let xs = self.standardize(x);
        let mut data = Vec::with_capacity(x.num_rows() * self.num_classes);
        let mut z = vec![0.0; self.num_classes];
        for i in 0..xs.num_rows() {
            logits(&self.params, xs.row(i), self.num_classes, &mut z);
            data.extend(softmax_scaled(&z, 1.0));
        }
        Ok(ProbabilityMatrix::from_raw(self.num_classes, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::item_rng;
    use rand::Rng;

    #[test]
    fn zero_epochs_predict_uniform() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let cfg = SoftmaxParams { epochs: 0, ..Default::default() };
        let m = SoftmaxRegression::fit(cfg, &x, &[0, 1], 3).unwrap();
        let p = m.predict_proba(&x).unwrap();
        assert!(p.rows().flatten().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn separable_blobs_fit_well() {
        let mut rng = item_rng(11, 0);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let c = i % 2;
            let center = if c == 0 { -2.0 } else { 2.0 };
            rows.push(vec![center + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = SoftmaxRegression::fit(SoftmaxParams::default(), &x, &y, 2).unwrap();
        let p = m.predict_proba(&x).unwrap();
        let acc = (0..200).filter(|&i| p.argmax(i) == y[i]).count() as f64 / 200.0;
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn fits_are_bit_identical() {
        let x = FeatureMatrix::from_rows(&[vec![0.1, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let a = SoftmaxRegression::fit(SoftmaxParams::default(), &x, &[0, 1, 2], 3).unwrap();
        let b = SoftmaxRegression::fit(SoftmaxParams::default(), &x, &[0, 1, 2], 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for trial in 0..20u64 {
            let mut rng = item_rng(trial, 1);
            let d = rng.random_range(1..=5);
            let k = rng.random_range(2..=4);
            let n = rng.random_range(1..=20);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let params: Vec<f64> = (0..k * d + k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let l2 = 1e-2;
            let (_, grad) = loss_and_gradient(&params, &x, &y, k, l2);
            let h = 1e-5;
            for j in 0..params.len() {
                let mut up = params.clone();
                let mut down = params.clone();
                up[j] += h;
                down[j] -= h;
                let numeric = (loss_and_gradient(&up, &x, &y, k, l2).0 - loss_and_gradient(&down, &x, &y, k, l2).0) / (2.0 * h);
                let rel = (numeric - grad[j]).abs() / grad[j].abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-5 || (numeric - grad[j]).abs() < 1e-10, "trial {trial} param {j}: {numeric} vs {}", grad[j]);
            }
        }
    }
}
