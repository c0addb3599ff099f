//! Order-fixed reductions for Monte Carlo output.

use serde::{Deserialize, Serialize};

/// Pairwise summation in index order. The association tree depends only on
/// the slice length, so the result is bit-identical however the slice was
/// produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        return xs.iter().fold(0.0, |acc, x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanSe {
                mean: f64::NAN,
                std_error: f64::NAN,
                count: 0,
            };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let std_error = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        MeanSe {
            mean,
            std_error,
            count: n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_exact_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn mean_se_of_constant() {
        let s = MeanSe::from_samples(&[2.5; 10]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn mean_se_known_values() {
        // sample variance of 1..5 is 2.5
        let s = MeanSe::from_samples(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.mean, 3.0);
        assert!((s.std_error - (2.5_f64 / 5.0).sqrt()).abs() < 1e-15);
    }
}
