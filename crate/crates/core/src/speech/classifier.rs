//! Pairwise Fisher discriminants with tuned thresholds and one-vs-one voting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Proportion;

pub const DIGITS: usize = 10;

/// Count, mean and covariance (n - 1 normalization) of a set of vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Row-major `dim x dim`.
    pub covariance: Vec<f64>,
}

impl ClassStats {
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let count = samples.len();
        if count < 2 {
            return Err(Error::config("speech", "each class needs at least two training samples"));
        }
        let dim = samples[0].len();
        let mut mean = vec![0.0; dim];
        for s in samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut covariance = vec![0.0; dim * dim];
        for s in samples {
            for i in 0..dim {
                let di = s[i] - mean[i];
                for j in 0..dim {
                    covariance[i * dim + j] += di * (s[j] - mean[j]);
                }
            }
        }
        covariance.iter_mut().for_each(|c| *c /= (count - 1) as f64);
        Ok(Self {
            count,
            mean,
            covariance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `D = (N_a S_a + N_b S_b + ridge I)^-1 (mu_a - mu_b)`.
pub fn fisher_direction(a: &ClassStats, b: &ClassStats, ridge: f64) -> Result<Vec<f64>> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b.dim(),
        });
    }
    let (na, nb) = (a.count as f64, b.count as f64);
    let m = DMatrix::from_fn(d, d, |i, j| {
        na * a.covariance[i * d + j] + nb * b.covariance[i * d + j] + if i == j { ridge } else { 0.0 }
    });
    let diff = DVector::from_iterator(d, a.mean.iter().zip(&b.mean).map(|(x, y)| x - y));
    let sol = m
        .lu()
        .solve(&diff)
        .ok_or_else(|| Error::SolveFailure("Fisher scatter matrix is singular".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailure("non-finite Fisher direction".into()));
    }
    Ok(sol.iter().copied().collect())
}

pub fn fit_fisher(class_a: &[Vec<f64>], class_b: &[Vec<f64>], ridge: f64) -> Result<Vec<f64>> {
    fisher_direction(&ClassStats::from_samples(class_a)?, &ClassStats::from_samples(class_b)?, ridge)
}

/// `0.5 P(proj_a > t) + 0.5 P(proj_b <= t)`.
pub fn balanced_accuracy(proj_a: &[f64], proj_b: &[f64], t: f64) -> f64 {
    let hit_a = proj_a.iter().filter(|&&p| p > t).count() as f64 / proj_a.len() as f64;
    let hit_b = proj_b.iter().filter(|&&p| p <= t).count() as f64 / proj_b.len() as f64;
    0.5 * (hit_a + hit_b)
}

/// Threshold maximizing the balanced accuracy, scanning the midpoints of the
/// sorted distinct projections plus the two open ends. Among equally good
/// candidates the smallest finite midpoint wins; open ends are replaced by a
/// finite value beyond the data. Returns `(threshold, balanced accuracy)`.
pub fn tune_threshold(proj_a: &[f64], proj_b: &[f64]) -> (f64, f64) {
    assert!(!proj_a.is_empty() && !proj_b.is_empty(), "both classes need samples");
    let mut values: Vec<f64> = proj_a.iter().chain(proj_b).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let lo = values[0];
    let hi = values[values.len() - 1];
    let margin = (hi - lo).abs() + 1.0;

    let mut best: Option<(f64, f64)> = None;
    let mut consider = |t: f64| {
        let acc = balanced_accuracy(proj_a, proj_b, t);
        if best.is_none_or(|(_, b)| acc > b + 1e-12) {
            best = Some((t, acc));
        }
    };
    for w in values.windows(2) {
        consider(0.5 * (w[0] + w[1]));
    }
    let finite = best;
    // open ends only win if strictly better than every finite midpoint
    let below = (lo - margin, balanced_accuracy(proj_a, proj_b, f64::NEG_INFINITY));
    let above = (hi + margin, balanced_accuracy(proj_a, proj_b, f64::INFINITY));
    let mut out = finite.unwrap_or(if below.1 >= above.1 { below } else { above });
    for cand in [below, above] {
        if cand.1 > out.1 + 1e-12 {
            out = cand;
        }
    }
    out
}

/// Binary classifier for the digit pair `(first, second)`, `first < second`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub first: u8,
    pub second: u8,
    pub direction: Vec<f64>,
    pub threshold: f64,
    pub train_balanced_accuracy: f64,
    pub stats_first: ClassStats,
    pub stats_second: ClassStats,
}

impl PairClassifier {
    /// `D^T (c_first - c_second)` for one feature matrix.
    pub fn project(&self, features: &FeatureVector) -> f64 {
        let (a, b) = (&features.c[self.first as usize], &features.c[self.second as usize]);
        self.direction
            .iter()
            .zip(a.iter().zip(b))
            .map(|(d, (x, y))| d * (x - y))
            .sum()
    }

    pub fn vote(&self, features: &FeatureVector) -> u8 {
        if self.project(features) > self.threshold {
            self.first
        } else {
            self.second
        }
    }
}

/// `c[i][j]`: integrated output of section `j` under digit-`i` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub c: Vec<Vec<f64>>,
}

impl FeatureVector {
    pub fn difference(&self, i: usize, k: usize) -> Vec<f64> {
        self.c[i].iter().zip(&self.c[k]).map(|(a, b)| a - b).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            c: self.c.iter().map(|r| r.iter().map(|v| v * s).collect()).collect(),
        }
    }
}

/// Fits all 45 pair classifiers from labelled training features.
pub fn fit_pairs(features: &[FeatureVector], labels: &[u8], fisher_ridge: f64) -> Result<Vec<PairClassifier>> {
    let mut pairs = Vec::with_capacity(DIGITS * (DIGITS - 1) / 2);
    for i in 0..DIGITS as u8 {
        for k in i + 1..DIGITS as u8 {
            let collect = |d: u8| -> Vec<Vec<f64>> {
                features
                    .iter()
                    .zip(labels)
                    .filter(|(_, &l)| l == d)
                    .map(|(f, _)| f.difference(i as usize, k as usize))
                    .collect()
            };
            let (va, vb) = (collect(i), collect(k));
            let stats_first = ClassStats::from_samples(&va).map_err(|_| {
                Error::config("speech", format!("digit {i} has fewer than two training utterances"))
            })?;
            let stats_second = ClassStats::from_samples(&vb).map_err(|_| {
                Error::config("speech", format!("digit {k} has fewer than two training utterances"))
            })?;
            let direction = fisher_direction(&stats_first, &stats_second, fisher_ridge)?;
            let dot = |v: &Vec<f64>| v.iter().zip(&direction).map(|(a, b)| a * b).sum::<f64>();
            let pa: Vec<f64> = va.iter().map(dot).collect();
            let pb: Vec<f64> = vb.iter().map(dot).collect();
            let (threshold, acc) = tune_threshold(&pa, &pb);
            pairs.push(PairClassifier {
                first: i,
                second: k,
                direction,
                threshold,
                train_balanced_accuracy: acc,
                stats_first,
                stats_second,
            });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub digit: u8,
    pub votes: [usize; DIGITS],
    /// Several digits shared the top vote count; the smallest was returned.
    pub tie: bool,
}

pub fn classify(features: &FeatureVector, pairs: &[PairClassifier]) -> Classification {
    let mut votes = [0usize; DIGITS];
    for p in pairs {
        votes[p.vote(features) as usize] += 1;
    }
    tally(votes)
}

pub fn tally(votes: [usize; DIGITS]) -> Classification {
    let top = *votes.iter().max().unwrap();
    let digit = votes.iter().position(|&v| v == top).unwrap() as u8;
    let tie = votes.iter().filter(|&&v| v == top).count() > 1;
    Classification { digit, votes, tie }
}

/// `probabilities[predicted][actual]`; each column with at least one sample
/// sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; DIGITS]; DIGITS],
    pub probabilities: [[f64; DIGITS]; DIGITS],
    pub per_digit: Vec<Proportion>,
    pub accuracy: Proportion,
}

pub fn confusion_matrix(predictions: &[u8], labels: &[u8]) -> ConfusionMatrix {
    assert_eq!(predictions.len(), labels.len(), "predictions and labels differ in length");
    let mut counts = [[0usize; DIGITS]; DIGITS];
    for (&p, &l) in predictions.iter().zip(labels) {
        counts[p as usize][l as usize] += 1;
    }
    let mut probabilities = [[0.0; DIGITS]; DIGITS];
    let mut per_digit = Vec::with_capacity(DIGITS);
    for actual in 0..DIGITS {
        let total: usize = (0..DIGITS).map(|p| counts[p][actual]).sum();
        if total > 0 {
            for p in 0..DIGITS {
                probabilities[p][actual] = counts[p][actual] as f64 / total as f64;
            }
        }
        per_digit.push(Proportion::new(counts[actual][actual], total));
    }
    let hits = (0..DIGITS).map(|d| counts[d][d]).sum();
    ConfusionMatrix {
        counts,
        probabilities,
        per_digit,
        accuracy: Proportion::new(hits, predictions.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: Vec<f64>, count: usize) -> ClassStats {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = 1.0;
        }
        ClassStats {
            count,
            mean,
            covariance: cov,
        }
    }

    #[test]
    fn isotropic_direction_is_mean_difference() {
        let a = stats(vec![3.0, 1.0, -2.0], 1);
        let b = stats(vec![1.0, 1.0, 0.0], 1);
        let d = fisher_direction(&a, &b, 0.0).unwrap();
        assert_eq!(d, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn large_ridge_limit() {
        let a = stats(vec![3.0, 1.0], 5);
        let b = stats(vec![1.0, 2.0], 7);
        let lam = 1e9;
        let d = fisher_direction(&a, &b, lam).unwrap();
        assert!((d[0] * lam - 2.0).abs() < 1e-6);
        assert!((d[1] * lam + 1.0).abs() < 1e-6);
    }

    #[test]
    fn singular_scatter_fails() {
        let z = ClassStats {
            count: 2,
            mean: vec![1.0, 0.0],
            covariance: vec![0.0; 4],
        };
        let w = ClassStats {
            mean: vec![0.0, 0.0],
            ..z.clone()
        };
        assert!(matches!(fisher_direction(&z, &w, 0.0), Err(Error::SolveFailure(_))));
        assert!(fit_fisher(&[vec![1.0]], &[vec![0.0], vec![1.0]], 0.1).is_err());
    }

    #[test]
    fn separated_projections_pick_gap_midpoint() {
        let (t, acc) = tune_threshold(&[5.0, 6.0, 7.0], &[1.0, 2.0]);
        assert_eq!(t, 3.5);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn identical_projections_pick_smallest_midpoint() {
        let (t, acc) = tune_threshold(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(acc, 0.5);
        assert_eq!(t, 1.5);
    }

    #[test]
    fn single_value_gives_finite_threshold() {
        let (t, acc) = tune_threshold(&[1.0], &[1.0]);
        assert!(t.is_finite());
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn votes_total_45_and_unanimous() {
        let mut votes = [1usize; DIGITS];
        votes[7] = 9;
        let c = tally(votes);
        assert_eq!((c.digit, c.tie), (7, false));
        let mut tied = [0usize; DIGITS];
        tied[2] = 5;
        tied[5] = 5;
        let c = tally(tied);
        assert_eq!((c.digit, c.tie), (2, true));
    }

    #[test]
    fn perfect_confusion_is_identity() {
        let labels: Vec<u8> = (0..30).map(|i| (i % 10) as u8).collect();
        let m = confusion_matrix(&labels, &labels);
        for p in 0..DIGITS {
            for a in 0..DIGITS {
                assert_eq!(m.probabilities[p][a], if p == a { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(m.accuracy.p, 1.0);
    }

    #[test]
    fn columns_sum_to_one() {
        let labels: Vec<u8> = (0..97).map(|i| (i * 7 % 10) as u8).collect();
        let preds: Vec<u8> = (0..97).map(|i| (i * 3 % 10) as u8).collect();
        let m = confusion_matrix(&preds, &labels);
        for a in 0..DIGITS {
            let s: f64 = (0..DIGITS).map(|p| m.probabilities[p][a]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
