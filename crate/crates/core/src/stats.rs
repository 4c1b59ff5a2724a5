//! Small statistics helpers shared by the benchmarks.

use serde::{Deserialize, Serialize};

/// z-score of the two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A success count with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(successes, trials, Z95);
        let p = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        Self {
            successes,
            trials,
            p,
            ci_lo,
            ci_hi,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }
}

pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Linear-interpolation percentile (`q` in `[0, 100]`) of unsorted data.
pub fn percentile(data: &[f64], q: f64) -> f64 {
    assert!(!data.is_empty(), "percentile of empty data");
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Mean taken relative to the first value, exact for constant data.
pub fn mean(data: &[f64]) -> f64 {
    let x0 = data[0];
    x0 + data.iter().map(|x| x - x0).sum::<f64>() / data.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for a single value.
pub fn std_dev(data: &[f64]) -> f64 {
    if data.len() < 2 {
        return 0.0;
    }
    let m = mean(data);
    (data.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (data.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_value() {
        // 50/100: center 0.5, half-width ~0.0962
        let p = Proportion::new(50, 100);
        assert!((p.ci_lo - 0.4038).abs() < 1e-3);
        assert!((p.ci_hi - 0.5962).abs() < 1e-3);
        let all = Proportion::new(10, 10);
        assert_eq!(all.ci_hi, 1.0);
        assert!(all.ci_lo < 1.0);
    }

    #[test]
    fn percentile_endpoints() {
        let d = [3.0, 1.0, 2.0, 5.0, 4.0];
        assert_eq!(percentile(&d, 0.0), 1.0);
        assert_eq!(percentile(&d, 100.0), 5.0);
        assert_eq!(percentile(&d, 50.0), 3.0);
        assert_eq!(percentile(&d, 10.0), 1.4);
    }
}
