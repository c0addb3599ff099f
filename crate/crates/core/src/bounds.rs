//! Ranges of `ν` for which the `α = 1` generalized Bayes estimators
//! dominate the UMVU pair, and the choice of prior hyperparameters that
//! follows from them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalProblem;
use crate::error::{Error, Result};
use crate::predictive::{a_of_nu, PriorSpec};

/// Margin applied to the smallest positive rescaling of `C`.
pub const RESCALE_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuBounds {
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nu_max: f64,
    pub positive: bool,
    pub warnings: Vec<String>,
}

fn ratios(d: &DVector<f64>, c: &DVector<f64>) -> Result<Vec<f64>> {
    if d.len() != c.len() || d.is_empty() {
        return Err(Error::Dimension(format!(
            "D has {} entries and C has {}",
            d.len(),
            c.len()
        )));
    }
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("every d_i must be positive".into()));
    }
    if c.iter().any(|&x| !(x >= 1.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("every c_i must be at least 1".into()));
    }
    Ok(d.iter().zip(c.iter()).map(|(di, ci)| di / ci).collect())
}

fn check_dims(m: usize, n: usize, k: usize) -> Result<()> {
    if n <= k {
        return Err(Error::Dimension(format!("need n > k, got n = {n}, k = {k}")));
    }
    if m == 0 {
        return Err(Error::Dimension("m must be positive".into()));
    }
    Ok(())
}

pub fn nu_limits(d: &DVector<f64>, c: &DVector<f64>, m: usize, n: usize, k: usize) -> Result<NuBounds> {
    check_dims(m, n, k)?;
    let r = ratios(d, c)?;
    let sum: f64 = r.iter().sum();
    let max = r.iter().copied().fold(f64::MIN, f64::max);
    let p = (n - k) as f64;
    let mf = m as f64;
    let nu1 = 4.0 * (sum - 2.0 * max + mf / p) / (2.0 * max * (p + 2.0) + mf);
    let nu2 = (4.0 * (sum - max) + 2.0 * mf / p) / ((p - 2.0) * max + mf);
    let nu3 = 4.0 / mf * sum;
    let nu_max = nu1.min(nu2).min(nu3);
    let mut warnings = Vec::new();
    if n - k < 2 {
        warnings.push(format!(
            "n - k = {} is below 2; the domination argument does not cover this case",
            n - k
        ));
    }
    Ok(NuBounds {
        nu1,
        nu2,
        nu3,
        nu_max,
        positive: nu_max > 0.0,
        warnings,
    })
}

/// Factor `g0 ≥ 1` such that `C = g0 C0` gives `ν₁ > 0`.
pub fn rescale_c_for_positivity(d: &DVector<f64>, c0: &DVector<f64>, m: usize, n: usize, k: usize) -> Result<f64> {
    check_dims(m, n, k)?;
    let r = ratios(d, c0)?;
    let sum: f64 = r.iter().sum();
    let max = r.iter().copied().fold(f64::MIN, f64::max);
    let p = (n - k) as f64;
    let excess = 2.0 * max - sum;
    if sum - 2.0 * max + m as f64 / p > 0.0 {
        return Ok(1.0);
    }
    // (sum − 2max)/g + m/p > 0 iff g > (2max − sum) p / m
    let threshold = excess * p / m as f64;
    Ok((RESCALE_MARGIN * threshold).max(1.0))
}

/// `l − 2 ≤ 2(Σd_i/d_1 − 2)`, for `d` in nonincreasing order.
pub fn condition_d(d: &DVector<f64>) -> Result<bool> {
    if d.is_empty() {
        return Err(Error::Dimension("D is empty".into()));
    }
    if d.as_slice().windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Unsorted("D"));
    }
    let l = d.len() as f64;
    Ok(l - 2.0 <= 2.0 * (d.sum() / d[0] - 2.0))
}

/// `ν = (k + 2a + 2)/(n − k)`; `a` must exceed `−k/2 − 1`.
pub fn nu_of_prior(k: usize, a: f64, n: usize) -> Result<f64> {
    check_dims(1, n, k)?;
    if !(a > -(k as f64) / 2.0 - 1.0) {
        return Err(Error::InvalidParameter(format!("a must exceed -k/2 - 1, got {a}")));
    }
    Ok(crate::predictive::nu_of_a(a, n, k))
}

/// Inverse of [`nu_of_prior`]; `ν` must be positive.
pub fn a_of_nu_checked(k: usize, nu: f64, n: usize) -> Result<f64> {
    check_dims(1, n, k)?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    Ok(a_of_nu(nu, n, k))
}

/// Default prior for the domination experiments: `C = g0 C0` (with `C0 = I`
/// unless given), `γ = 1`, and `ν = ν_max` at the rescaled `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxDefault {
    pub prior: PriorSpec,
    pub scale: f64,
    pub bounds: NuBounds,
}

pub fn minimax_default(problem: &CanonicalProblem, c0: Option<&DVector<f64>>) -> Result<MinimaxDefault> {
    let ones = DVector::from_element(problem.l, 1.0);
    let c0 = c0.unwrap_or(&ones);
    let scale = rescale_c_for_positivity(&problem.d, c0, problem.m, problem.n, problem.k)?;
    let c = c0 * scale;
    let bounds = nu_limits(&problem.d, &c, problem.m, problem.n, problem.k)?;
    if !bounds.positive {
        return Err(Error::InvalidParameter("no positive nu after rescaling C".into()));
    }
    let prior = PriorSpec::with_nu(c, bounds.nu_max, 1.0, problem)?;
    Ok(MinimaxDefault { prior, scale, bounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn identity_example() {
        let b = nu_limits(&v(&[1.0; 3]), &v(&[1.0; 3]), 3, 12, 3).unwrap();
        assert!((b.nu1 - 16.0 / 75.0).abs() < 1e-15);
        assert!((b.nu2 - 13.0 / 15.0).abs() < 1e-15);
        assert!((b.nu3 - 4.0).abs() < 1e-15);
        assert_eq!(b.nu_max, b.nu1);
        assert!(b.positive);
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn single_component_needs_rescale() {
        let b = nu_limits(&v(&[1.0]), &v(&[1.0]), 1, 10, 1).unwrap();
        assert!((b.nu1 + 32.0 / 207.0).abs() < 1e-15);
        assert!(!b.positive);
        let g = rescale_c_for_positivity(&v(&[1.0]), &v(&[1.0]), 1, 10, 1).unwrap();
        assert!((g - 9.45).abs() < 1e-12);
        let b = nu_limits(&v(&[1.0]), &v(&[g]), 1, 10, 1).unwrap();
        assert!(b.nu1 > 0.0);
    }

    #[test]
    fn no_rescale_when_positive() {
        assert_eq!(
            rescale_c_for_positivity(&v(&[1.0; 3]), &v(&[1.0; 3]), 3, 12, 3).unwrap(),
            1.0
        );
    }

    #[test]
    fn condition_d_examples() {
        assert!(!condition_d(&v(&[10.0, 1.0, 1.0, 1.0])).unwrap());
        assert!(condition_d(&v(&[1.0, 1.0, 1.0])).unwrap());
        assert!(condition_d(&v(&[0.3; 6])).unwrap());
        assert!(matches!(condition_d(&v(&[1.0, 2.0])), Err(Error::Unsorted(_))));
    }

    #[test]
    fn nu_a_round_trip() {
        assert!((nu_of_prior(3, 0.0, 12).unwrap() - 5.0 / 9.0).abs() < 1e-15);
        let a = 1.234;
        let back = a_of_nu_checked(3, nu_of_prior(3, a, 12).unwrap(), 12).unwrap();
        assert!((back - a).abs() < 1e-12);
        assert!(a_of_nu_checked(3, 0.0, 12).is_err());
        assert!(nu_of_prior(3, -2.5, 12).is_err());
        let eps = 1e-9;
        assert!((nu_of_prior(3, -2.5 + eps, 12).unwrap() - 2.0 * eps / 9.0).abs() < 1e-15);
    }

    #[test]
    fn small_dof_warns() {
        let b = nu_limits(&v(&[1.0]), &v(&[1.0]), 1, 2, 1).unwrap();
        assert_eq!(b.warnings.len(), 1);
    }
}
