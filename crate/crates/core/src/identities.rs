//! Numerical checks of the identities behind the density and risk results:
//! the quadratic-form lemma, the beta-integral identity, the chi-square
//! identity and the logarithm bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictive::lemma_identity_residual;
use crate::quadrature::{integrate, Tolerance};
use crate::rng::{stream_rng, Domain};
use crate::special::ln_beta;
use crate::summary::MeanSe;

pub const LEMMA_TOLERANCE: f64 = 1e-8;
pub const BETA_TOLERANCE: f64 = 1e-6;
/// Chi-square check passes when the mean paired difference is within this
/// many standard errors of zero.
pub const CHI_SQUARE_Z: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub instances: usize,
    /// Largest relative gap; for the chi-square check, `|mean|/SE` of the
    /// paired difference; for the log bound, the largest excess of the
    /// left side over the right.
    pub max_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn new(name: &str, instances: usize, max_gap: f64, tolerance: f64) -> Self {
        IdentityReport {
            name: name.into(),
            instances,
            max_gap,
            tolerance,
            pass: max_gap <= tolerance,
        }
    }
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// `m × l` matrix with orthonormal columns, from the QR factor of a
/// Gaussian matrix.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, m: usize, l: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, l, |_, _| StandardNormal.sample(&mut *rng));
    g.qr().q().columns(0, l).clone_owned()
}

/// Lemma identity on random `(F, D*, Q, ỹ, v)`; gap is
/// `|lhs − rhs|/(1 + |lhs|)`.
pub fn lemma_suite(instances: usize, seed: u64, tolerance: f64) -> Result<IdentityReport> {
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let mut rng = stream_rng(seed, Domain::Identity, i as u64);
        let l = rng.random_range(1..=4);
        let m = l + rng.random_range(0..=3);
        let q = random_orthonormal(&mut rng, m, l);
        let d_star = DVector::from_iterator(l, (0..l).map(|_| rng.random_range(0.05..5.0)));
        let f = DVector::from_iterator(l, (0..l).map(|_| rng.random_range(0.0..=1.0)));
        let y = normal_vector(&mut rng, m) * 2.0;
        let v = normal_vector(&mut rng, l) * 2.0;
        let sides = lemma_identity_residual(&f, &d_star, &q, &y, &v)?;
        worst = worst.max((sides.lhs - sides.rhs).abs() / (1.0 + sides.lhs.abs()));
    }
    Ok(IdentityReport::new("lemma quadratic form", instances, worst, tolerance))
}

/// `∫₀¹ λ^a (1−λ)^b (1+wλ)^{−(a+b+2)} dλ` by adaptive quadrature.
pub fn beta_integral_lhs(a: f64, b: f64, w: f64) -> f64 {
    let g = a + b + 2.0;
    let f = |x: f64| {
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        (a * x.ln() + b * (-x).ln_1p() - g * (w * x).ln_1p()).exp()
    };
    let tol = Tolerance {
        rel: 1e-11,
        abs: 0.0,
        max_intervals: 5000,
    };
    integrate(f, 0.0, 0.5, tol).value + integrate(f, 0.5, 1.0, tol).value
}

/// `B(a+1, b+1)/(w+1)^{a+1}`
pub fn beta_integral_rhs(a: f64, b: f64, w: f64) -> f64 {
    (ln_beta(a + 1.0, b + 1.0) - (a + 1.0) * w.ln_1p()).exp()
}

pub fn beta_suite(instances: usize, seed: u64, tolerance: f64) -> Result<IdentityReport> {
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let mut rng = stream_rng(seed, Domain::Identity, (1 << 40) | i as u64);
        let a = rng.random_range(-0.5..6.0);
        let b = rng.random_range(-0.5..6.0);
        let w = rng.random_range(0.0..20.0);
        let lhs = beta_integral_lhs(a, b, w);
        let rhs = beta_integral_rhs(a, b, w);
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    Ok(IdentityReport::new("beta integral", instances, worst, tolerance))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareCheck {
    pub lhs: MeanSe,
    pub rhs: MeanSe,
    /// Paired difference `lhs − rhs`.
    pub gap: MeanSe,
}

impl ChiSquareCheck {
    pub fn z_score(&self) -> f64 {
        if self.gap.std_error > 0.0 {
            self.gap.mean.abs() / self.gap.std_error
        } else if self.gap.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Monte Carlo check of `E[φ(W)S/(Wσ²)] = E[(p+2)φ(W)/W − 2φ'(W)]` with
/// `ηS ~ χ²_p`, `W = T/S` and `T` an independent `σ²χ²_l` draw.
pub fn chi_square_identity_check(
    phi: impl Fn(f64) -> f64,
    dphi: impl Fn(f64) -> f64,
    dof: usize,
    l: usize,
    n_mc: usize,
    seed: u64,
) -> Result<ChiSquareCheck> {
    if dof == 0 || l == 0 {
        return Err(Error::InvalidParameter("degrees of freedom must be positive".into()));
    }
    let chi_s = ChiSquared::new(dof as f64).expect("positive dof");
    let chi_t = ChiSquared::new(l as f64).expect("positive dof");
    let mut rng = stream_rng(seed, Domain::Identity, 2 << 40);
    let p = dof as f64;
    let mut lhs = Vec::with_capacity(n_mc);
    let mut rhs = Vec::with_capacity(n_mc);
    let mut gap = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let s: f64 = chi_s.sample(&mut rng);
        let t: f64 = chi_t.sample(&mut rng);
        let w = t / s;
        let left = phi(w) * s / w;
        let right = (p + 2.0) * phi(w) / w - 2.0 * dphi(w);
        lhs.push(left);
        rhs.push(right);
        gap.push(left - right);
    }
    Ok(ChiSquareCheck {
        lhs: MeanSe::from_samples(&lhs),
        rhs: MeanSe::from_samples(&rhs),
        gap: MeanSe::from_samples(&gap),
    })
}

/// `φ_ν(w) = νw/(ν + 1 + w)`
pub fn phi_nu(nu: f64, w: f64) -> f64 {
    nu * w / (nu + 1.0 + w)
}

/// `φ_ν'(w) = ν(ν + 1)/(ν + 1 + w)²`
pub fn phi_nu_derivative(nu: f64, w: f64) -> f64 {
    nu * (nu + 1.0) / (nu + 1.0 + w).powi(2)
}

pub fn chi_square_suite(nu: f64, dof: usize, l: usize, n_mc: usize, seed: u64) -> Result<IdentityReport> {
    if n_mc == 0 {
        return Ok(IdentityReport::new("chi-square identity", 0, 0.0, CHI_SQUARE_Z));
    }
    let check = chi_square_identity_check(|w| phi_nu(nu, w), |w| phi_nu_derivative(nu, w), dof, l, n_mc, seed)?;
    Ok(IdentityReport::new(
        "chi-square identity",
        n_mc,
        check.z_score(),
        CHI_SQUARE_Z,
    ))
}

/// `−ln(1 − x) ≤ x + x²/(2(1 − x))` at `points` equally spaced `x` in
/// `(0, 0.99)`.
pub fn log_inequality_suite(points: usize) -> IdentityReport {
    let mut worst = f64::NEG_INFINITY;
    for i in 1..=points {
        let x = 0.99 * i as f64 / (points + 1) as f64;
        let lhs = -(-x).ln_1p();
        let rhs = x + x * x / (2.0 * (1.0 - x));
        worst = worst.max(lhs - rhs);
    }
    if points == 0 {
        worst = 0.0;
    }
    IdentityReport::new("log inequality", points, worst, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_identity_at_simple_points() {
        // w = 0 reduces to the beta function itself
        let lhs = beta_integral_lhs(1.0, 2.0, 0.0);
        assert!((lhs - 1.0 / 12.0).abs() < 1e-13);
        let lhs = beta_integral_lhs(-0.5, 0.5, 3.0);
        let rhs = beta_integral_rhs(-0.5, 0.5, 3.0);
        assert!((lhs - rhs).abs() < 1e-8 * rhs, "{lhs} {rhs}");
    }

    #[test]
    fn zero_nu_gives_zero_sides() {
        let c = chi_square_identity_check(|w| phi_nu(0.0, w), |w| phi_nu_derivative(0.0, w), 9, 3, 1000, 1).unwrap();
        assert_eq!(c.lhs.mean, 0.0);
        assert_eq!(c.rhs.mean, 0.0);
        assert_eq!(c.z_score(), 0.0);
    }

    #[test]
    fn vacuous_suites_pass() {
        assert!(lemma_suite(0, 1, 1e-8).unwrap().pass);
        assert!(beta_suite(0, 1, 1e-6).unwrap().pass);
        assert!(chi_square_suite(0.2, 9, 3, 0, 1).unwrap().pass);
        assert!(log_inequality_suite(0).pass);
    }

    #[test]
    fn log_bound_holds() {
        let r = log_inequality_suite(10_000);
        assert!(r.pass, "{r:?}");
    }
}
