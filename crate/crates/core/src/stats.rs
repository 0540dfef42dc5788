//! Small estimators shared by the engines and the test oracles.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Mean and its standard error, treating the values as independent.
pub fn mean_stderr(values: &[f64]) -> MeanSe {
    MeanSe {
        mean: mean(values),
        stderr: (sample_variance(values) / values.len() as f64).sqrt(),
    }
}

/// Streaming batch-means estimator over a series of known length.
///
/// Value `k` of `total` lands in batch `k * batches / total`, so every
/// batch holds `total / batches` or one more values.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    total: usize,
    batches: usize,
    seen: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl BatchAccumulator {
    pub fn new(total: usize, batches: usize) -> Self {
        assert!(batches >= 1 && total >= batches);
        Self {
            total,
            batches,
            seen: 0,
            sums: vec![0.0; batches],
            counts: vec![0; batches],
        }
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        let b = (self.seen * self.batches / self.total).min(self.batches - 1);
        self.sums[b] += value;
        self.counts[b] += 1;
        self.seen += 1;
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Overall mean and the batch-means standard error.
    pub fn finish(&self) -> MeanSe {
        let total: f64 = self.sums.iter().sum();
        let n: usize = self.counts.iter().sum();
        let means: Vec<f64> = self
            .sums
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        MeanSe {
            mean: total / n as f64,
            stderr: (sample_variance(&means) / means.len() as f64).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_means_of_constant_series() {
        let mut acc = BatchAccumulator::new(105, 10);
        for _ in 0..105 {
            acc.push(2.5);
        }
        let r = acc.finish();
        assert_eq!(r.mean, 2.5);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(acc.seen(), 105);
    }

    #[test]
    fn batch_mean_equals_plain_mean() {
        let values: Vec<f64> = (0..1000).map(|k| (k as f64).sin()).collect();
        let mut acc = BatchAccumulator::new(values.len(), 10);
        values.iter().for_each(|&v| acc.push(v));
        assert!((acc.finish().mean - mean(&values)).abs() < 1e-14);
    }

    #[test]
    fn variance_basics() {
        assert_eq!(sample_variance(&[1.0]), 0.0);
        assert_eq!(sample_variance(&[1.0, 3.0]), 2.0);
    }
}
