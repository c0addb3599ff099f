//! α-divergence losses, the minimax risk, and Monte Carlo risk estimates.

mod mc;

pub use mc::{alpha_divergence_mc, d1_losses, risk_alpha_mc, risk_d1_mc, AlphaRiskRun, MAX_EXCLUDED_FRACTION};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictive::Alpha;
use crate::special::digamma;
use crate::summary::MeanSe;

/// `f_α(z)`: `4(1 − z^{(1+α)/2})/(1 − α²)` for `|α| < 1`, `z ln z` at
/// `α = 1` and `−ln z` at `α = −1`.
pub fn f_alpha(z: f64, alpha: Alpha) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::InvalidParameter(format!("f_alpha needs z > 0, got {z}")));
    }
    Ok(f_alpha_log(z.ln(), alpha))
}

/// `f_α(exp(log_z))`, computed without forming `z` where possible.
pub fn f_alpha_log(log_z: f64, alpha: Alpha) -> f64 {
    let a = alpha.value();
    if a == 1.0 {
        log_z * log_z.exp()
    } else if a == -1.0 {
        -log_z
    } else {
        -4.0 * (0.5 * (1.0 + a) * log_z).exp_m1() / (1.0 - a * a)
    }
}

/// Stein (entropy) loss `r − ln r − 1` with `r = σ̂²/σ²`.
pub fn stein_loss(ratio: f64) -> f64 {
    ratio - ratio.ln() - 1.0
}

/// `D_1` loss of the normal plug-in density:
/// `½{‖θ̂ − θ‖²/σ² + m(σ̂²/σ² − ln(σ̂²/σ²) − 1)}`.
pub fn d1_loss_plugin(
    theta_hat: &DVector<f64>,
    sigma2_hat: f64,
    theta: &DVector<f64>,
    sigma2: f64,
    m: usize,
) -> Result<f64> {
    if !(sigma2_hat > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter("variances must be positive".into()));
    }
    if theta_hat.len() != theta.len() {
        return Err(Error::Dimension("theta_hat and theta differ in length".into()));
    }
    let quad = (theta_hat - theta).norm_squared() / sigma2;
    Ok(0.5 * (quad + m as f64 * stein_loss(sigma2_hat / sigma2)))
}

/// `½{tr D + m(ln γ − ψ(γ))}` with `γ = (n − k)/2`.
pub fn minimax_risk(d: &DVector<f64>, m: usize, n: usize, k: usize) -> Result<f64> {
    if n <= k {
        return Err(Error::Dimension(format!("need n > k, got n = {n}, k = {k}")));
    }
    Ok(0.5 * (d.sum() + m as f64 * variance_minimax_risk(n - k)))
}

/// `ln γ − ψ(γ)` with `γ = dof/2`: the constant `L_2` risk of `S/(n − k)`.
pub fn variance_minimax_risk(dof: usize) -> f64 {
    let g = dof as f64 / 2.0;
    g.ln() - digamma(g)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
    /// Replications dropped because their density could not be normalized.
    pub excluded: usize,
}

impl RiskEstimate {
    pub fn from_losses(losses: &[f64], seed: u64) -> Self {
        let s = MeanSe::from_samples(losses);
        RiskEstimate {
            mean: s.mean,
            std_error: s.std_error,
            reps: s.count,
            seed,
            excluded: 0,
        }
    }

    /// `|mean − value| ≤ z · SE`
    pub fn within(&self, value: f64, z: f64) -> bool {
        (self.mean - value).abs() <= z * self.std_error
    }
}

/// Mean and SE of `a_i − b_i`, for comparisons under common random numbers.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<MeanSe> {
    if a.len() != b.len() {
        return Err(Error::Dimension("paired samples differ in length".into()));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(MeanSe::from_samples(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn al(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    #[test]
    fn f_alpha_values() {
        for a in [-1.0, -0.5, 0.0, 0.7, 1.0] {
            assert_eq!(f_alpha(1.0, al(a)).unwrap(), 0.0);
        }
        assert!((f_alpha(4.0, al(0.0)).unwrap() + 4.0).abs() < 1e-14);
        assert!((f_alpha(3.0, al(-1.0)).unwrap() + 3.0_f64.ln()).abs() < 1e-15);
        assert!((f_alpha(3.0, al(1.0)).unwrap() - 3.0 * 3.0_f64.ln()).abs() < 1e-14);
        assert!(f_alpha(0.0, al(0.0)).is_err());
    }

    #[test]
    fn d1_loss_examples() {
        let t = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(d1_loss_plugin(&t, 1.5, &t, 1.5, 2).unwrap(), 0.0);
        let e1 = DVector::from_vec(vec![2.0, 2.0]);
        assert!((d1_loss_plugin(&e1, 1.0, &t, 1.0, 2).unwrap() - 0.5).abs() < 1e-15);
        let got = d1_loss_plugin(&t, 2.0, &t, 1.0, 2).unwrap();
        assert!((got - (1.0 - 2.0_f64.ln())).abs() < 1e-15);
        assert!((got - 0.306853).abs() < 1e-6);
        assert!(d1_loss_plugin(&t, 0.0, &t, 1.0, 2).is_err());
    }

    #[test]
    fn minimax_examples() {
        // ψ(1) = −γ_E
        assert!((variance_minimax_risk(2) - 0.577_215_664_901_532_9).abs() < 1e-12);
        let mr = minimax_risk(&DVector::from_element(3, 1.0), 3, 12, 3).unwrap();
        assert!((mr - 1.672_809_706).abs() < 1e-8, "{mr}");
        assert!(minimax_risk(&DVector::zeros(1), 1, 3, 3).is_err());
    }
}
