//! Direct-evaluation oracle for trust, consensus and scores.
//!
//! Works on a dense `n x m` grid of optional labels and plain nested vectors,
//! so it shares no code with the library beyond the types used to feed it.

#![allow(dead_code)]

use activelab::{AnnotationTable, ClassLabel, ProbabilityMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FLOOR: f64 = 1e-12;
pub const MIN_GAP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// `labels[i][j]` is annotator `j`'s label for example `i`.
    pub labels: Vec<Vec<Option<usize>>>,
    /// `models[l][i]` is model `l`'s probability row for example `i`.
    pub models: Vec<Vec<Vec<f64>>>,
}

fn random_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    match rng.random_range(0..10) {
        0 => vec![1.0 / k as f64; k],
        1 => {
            let mut row = vec![0.0; k];
            row[rng.random_range(0..k)] = 1.0;
            row
        }
        _ => {
            let sharpness = rng.random_range(0.3..4.0);
            let raw: Vec<f64> = (0..k)
                .map(|_| (-(1.0 - rng.random::<f64>()).ln()).powf(sharpness))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v / total).collect()
        }
    }
}

/// A random instance with `n <= 25`, `m <= 6`, `K` in 2..=5 and two or three
/// models. Roughly a quarter of instances have no multiply-annotated example.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(2..=25);
    let k = rng.random_range(2..=5);
    let num_models = rng.random_range(2..=3);
    let single_only = rng.random_range(0..4) == 0;
    let mut m = rng.random_range(1..=6);
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let mut labels = vec![vec![None; m]; n];

    if single_only {
        m = m.min(n);
        for row in labels.iter_mut() {
            row.truncate(m);
        }
        for i in 0..n {
            let annotator = if i < m {
                Some(i)
            } else if rng.random_range(0..3) > 0 {
                Some(rng.random_range(0..m))
            } else {
                None
            };
            if let Some(j) = annotator {
                labels[i][j] = Some(rng.random_range(0..k));
            }
        }
    } else {
        let skill: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let density = rng.random_range(0.2..0.9);
        for i in 0..n {
            for j in 0..m {
                if rng.random::<f64>() < density {
                    labels[i][j] = Some(if rng.random::<f64>() < skill[j] {
                        truth[i]
                    } else {
                        rng.random_range(0..k)
                    });
                }
            }
        }
        for j in 0..m {
            if labels.iter().all(|row| row[j].is_none()) {
                let i = rng.random_range(0..n);
                labels[i][j] = Some(rng.random_range(0..k));
            }
        }
    }

    let models = (0..num_models)
        .map(|_| (0..n).map(|_| random_row(rng, k)).collect())
        .collect();
    Instance { n, m, k, labels, models }
}

impl Instance {
    pub fn table(&self) -> AnnotationTable {
        let mut t = AnnotationTable::new(self.n, self.k).unwrap();
        for (i, row) in self.labels.iter().enumerate() {
            for (j, y) in row.iter().enumerate() {
                if let Some(y) = y {
                    t.add_annotation(i, j, ClassLabel::new(*y, self.k).unwrap()).unwrap();
                }
            }
        }
        t
    }

    pub fn matrix(&self, l: usize) -> ProbabilityMatrix {
        ProbabilityMatrix::from_rows(self.k, &self.models[l]).unwrap()
    }

    pub fn count(&self, i: usize) -> usize {
        self.labels[i].iter().flatten().count()
    }

    pub fn labeled(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.count(i) > 0).collect()
    }

    pub fn multi(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.count(i) > 1).collect()
    }

    pub fn total(&self) -> usize {
        (0..self.n).map(|i| self.count(i)).sum()
    }
}

/// First index of the largest entry.
pub fn first_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..row.len() {
        if row[k] > row[best] {
            best = k;
        }
    }
    best
}

pub fn ln(p: f64) -> f64 {
    p.max(FLOOR).ln()
}

pub fn likelihood(label: usize, p: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|c| if c == label { p } else { (1.0 - p) / (k - 1) as f64 })
        .collect()
}

/// Majority vote; ties go to the class the tie-break row rates highest, then
/// to the smallest index.
pub fn majority_vote(inst: &Instance, i: usize, tie_break: &[f64]) -> Option<usize> {
    let mut votes = vec![0usize; inst.k];
    for y in inst.labels[i].iter().flatten() {
        votes[*y] += 1;
    }
    let top = *votes.iter().max().unwrap();
    if top == 0 {
        return None;
    }
    let mut tied: Vec<usize> = (0..inst.k).filter(|&c| votes[c] == top).collect();
    tied.sort_by(|&a, &b| tie_break[b].total_cmp(&tie_break[a]).then(a.cmp(&b)));
    Some(tied[0])
}

pub fn most_labeled_class(inst: &Instance) -> usize {
    let mut totals = vec![0.0; inst.k];
    for row in &inst.labels {
        for y in row.iter().flatten() {
            totals[*y] += 1.0;
        }
    }
    first_argmax(&totals)
}

#[derive(Debug, Clone)]
pub struct OracleTrust {
    pub p: f64,
    pub g: Vec<f64>,
    pub a_m: Vec<f64>,
    pub a_mlc: f64,
    pub w: Vec<f64>,
    pub w_m: Vec<f64>,
    pub w_avg: f64,
    pub fallback: bool,
    pub mv: Vec<Option<usize>>,
}

/// Trust quantities fitted against the models listed in `which`.
pub fn trust(inst: &Instance, which: &[usize]) -> OracleTrust {
    let first = &inst.models[which[0]];
    let mv: Vec<Option<usize>> = (0..inst.n).map(|i| majority_vote(inst, i, &first[i])).collect();
    let mlc = most_labeled_class(inst);
    let multi = inst.multi();
    let frac = |set: &[usize], pred: &dyn Fn(usize) -> usize| {
        set.iter().filter(|&&i| mv[i] == Some(pred(i))).count() as f64 / set.len() as f64
    };

    let (p, g, a_m, a_mlc, fallback) = if multi.is_empty() {
        let labeled = inst.labeled();
        let a_m: Vec<f64> = which
            .iter()
            .map(|&l| frac(&labeled, &|i| first_argmax(&inst.models[l][i])))
            .collect();
        let a_mlc = frac(&labeled, &|_| mlc);
        let p = a_m[0].clamp(1.0 / inst.k as f64, 1.0);
        (p, vec![p; inst.m], a_m, a_mlc, true)
    } else {
        let p = multi
            .iter()
            .map(|&i| {
                let hits = inst.labels[i].iter().flatten().filter(|&&y| Some(y) == mv[i]).count();
                hits as f64 / inst.count(i) as f64
            })
            .sum::<f64>()
            / multi.len() as f64;
        let g = (0..inst.m)
            .map(|j| {
                let mut agree = 0.0;
                let mut denom = 0.0;
                for i in 0..inst.n {
                    let Some(mine) = inst.labels[i][j] else { continue };
                    for (other, y) in inst.labels[i].iter().enumerate() {
                        if let (true, Some(y)) = (other != j, y) {
                            agree += if *y == mine { 1.0 } else { 0.0 };
                        }
                    }
                    denom += (inst.count(i) - 1) as f64;
                }
                if denom > 0.0 {
                    agree / denom
                } else {
                    p
                }
            })
            .collect();
        let a_m = which
            .iter()
            .map(|&l| frac(&multi, &|i| first_argmax(&inst.models[l][i])))
            .collect();
        (p, g, a_m, frac(&multi, &|_| mlc), false)
    };

    let gap = (1.0 - a_mlc).max(MIN_GAP);
    let w: Vec<f64> = g.iter().map(|gj| (1.0 - (1.0 - gj) / gap).max(0.0)).collect();
    let mean_count = inst.total() as f64 / inst.labeled().len() as f64;
    let w_m = a_m
        .iter()
        .map(|a| (1.0 - (1.0 - a) / gap).max(0.0) * mean_count.sqrt())
        .collect();
    let w_avg = w.iter().sum::<f64>() / inst.m as f64;
    OracleTrust {
        p,
        g,
        a_m,
        a_mlc,
        w,
        w_m,
        w_avg,
        fallback,
        mv,
    }
}

/// Weighted consensus: normalized aggregate and label per labeled example.
pub fn consensus(inst: &Instance, which: &[usize], t: &OracleTrust) -> Vec<Option<(usize, Vec<f64>)>> {
    (0..inst.n)
        .map(|i| {
            if inst.count(i) == 0 {
                return None;
            }
            let mut agg = vec![0.0; inst.k];
            let mut total = 0.0;
            for (pos, &l) in which.iter().enumerate() {
                for c in 0..inst.k {
                    agg[c] += t.w_m[pos] * inst.models[l][i][c];
                }
                total += t.w_m[pos];
            }
            for (j, y) in inst.labels[i].iter().enumerate() {
                if let Some(y) = y {
                    let like = likelihood(*y, t.p, inst.k);
                    for c in 0..inst.k {
                        agg[c] += t.w[j] * like[c];
                    }
                    total += t.w[j];
                }
            }
            if total > 0.0 {
                let agg: Vec<f64> = agg.iter().map(|v| v / total).collect();
                Some((first_argmax(&agg), agg))
            } else {
                Some((t.mv[i].unwrap(), vec![1.0 / inst.k as f64; inst.k]))
            }
        })
        .collect()
}

fn ratio_or_uniform(num: f64, den: f64, k: usize) -> f64 {
    if den > 0.0 {
        (num / den).clamp(0.0, 1.0)
    } else {
        1.0 / k as f64
    }
}

/// ActiveLab scores for every example using the models in `which`, each
/// carrying its own weight (a single entry gives the one-model score).
pub fn activelab_scores(inst: &Instance, which: &[usize]) -> Vec<f64> {
    let t = trust(inst, which);
    let cons = consensus(inst, which, &t);
    let k = inst.k;
    (0..inst.n)
        .map(|i| {
            let target = match &cons[i] {
                Some((y, _)) => *y,
                None => {
                    let weights: Vec<f64> = if t.w_m.iter().sum::<f64>() > 0.0 {
                        t.w_m.clone()
                    } else {
                        vec![1.0; which.len()]
                    };
                    let mut mean = vec![0.0; k];
                    for (pos, &l) in which.iter().enumerate() {
                        for c in 0..k {
                            mean[c] += weights[pos] * inst.models[l][i][c];
                        }
                    }
                    first_argmax(&mean)
                }
            };
            let mut num = t.w_avg / k as f64;
            let mut den = t.w_avg;
            for (pos, &l) in which.iter().enumerate() {
                num += t.w_m[pos] * inst.models[l][i][target];
                den += t.w_m[pos];
            }
            for (j, y) in inst.labels[i].iter().enumerate() {
                if let Some(y) = y {
                    num += t.w[j] * likelihood(*y, t.p, k)[target];
                    den += t.w[j];
                }
            }
            ratio_or_uniform(num, den, k)
        })
        .collect()
}

/// Unlabeled-example score with one model: weighted blend of max
/// probability and the uniform baseline.
pub fn activelab_unlabeled_direct(row: &[f64], w_m: f64, w_avg: f64) -> f64 {
    let max = row.iter().cloned().fold(f64::MIN, f64::max);
    ratio_or_uniform(w_m * max + w_avg / row.len() as f64, w_m + w_avg, row.len())
}

pub fn entropy(row: &[f64]) -> f64 {
    row.iter().map(|&p| p * ln(p)).sum()
}

pub fn uncertainty(row: &[f64]) -> f64 {
    row.iter().cloned().fold(f64::MIN, f64::max)
}

pub fn alc(inst: &Instance, i: usize, row: &[f64]) -> f64 {
    let c = inst.count(i);
    if c == 0 {
        return entropy(row);
    }
    let mut emp = vec![0.0; inst.k];
    for y in inst.labels[i].iter().flatten() {
        emp[*y] += 1.0 / c as f64;
    }
    let cross: f64 = (0..inst.k).map(|k| emp[k] * ln(row[k])).sum();
    -(entropy(row) - cross)
}

pub fn disagreement(rows: &[&[f64]]) -> f64 {
    let l = rows.len() as f64;
    let k = rows[0].len();
    let mean: Vec<f64> = (0..k).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / l).collect();
    rows.iter()
        .map(|r| (0..k).map(|c| r[c] * ln(mean[c])).sum::<f64>())
        .sum::<f64>()
        / l
}
