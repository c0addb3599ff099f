//! Generalized Bayes predictive densities in canonical coordinates.
//!
//! For `α < 1` the density under the hierarchical prior factors as
//! `p̂_α ∝ p̂_{U,α} · p̌_α`, two multivariate-t shaped kernels. At `α = 1`
//! it is the normal plug-in density of [`plugin`].

mod density;
mod lemma;
mod normalize;
pub mod plugin;

pub use density::{
    best_invariant_normalizer, log_best_invariant, log_shrinkage_bayes, BestInvariant, Kernel, Normalization,
    PredictiveDensity, ShrinkageBayes, TKernel,
};
pub use lemma::{ab_forms, lemma_identity_residual, AbForms, LemmaSides};
pub use normalize::{alpha_limit_check, normalize_density, normalize_on_stream, AlphaGap, MIN_ESS_FRACTION};
pub use plugin::{
    plugin_bayes_estimators, plugin_density, plugin_estimate_with_nu, stein_variance, stein_variance_star,
    umvu_estimators, PluginEstimate,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::canonical::CanonicalProblem;
use crate::error::{Error, Result};

/// Divergence index `α ∈ [−1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [-1, 1], got {alpha}"
            )));
        }
        Ok(Alpha(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_one(self) -> bool {
        self.0 == 1.0
    }

    /// `1 − α`
    pub fn complement(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;
    fn try_from(x: f64) -> Result<Self> {
        Alpha::new(x)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

/// Hyperparameters `(C, a, γ)` of the hierarchical prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Diagonal of `C`, each entry at least 1.
    pub c: DVector<f64>,
    pub a: f64,
    pub gamma: f64,
}

impl PriorSpec {
    pub fn new(c: DVector<f64>, a: f64, gamma: f64) -> Result<Self> {
        if c.iter().any(|&ci| !(ci >= 1.0) || !ci.is_finite()) {
            return Err(Error::InvalidParameter(
                "every c_i must be finite and at least 1".into(),
            ));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma_prior must be at least 1, got {gamma}"
            )));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("a"));
        }
        Ok(PriorSpec { c, a, gamma })
    }

    /// Prior with the given `ν = (k + 2a + 2)/(n − k)` in place of `a`.
    pub fn with_nu(c: DVector<f64>, nu: f64, gamma: f64, problem: &CanonicalProblem) -> Result<Self> {
        let prior = PriorSpec::new(c, a_of_nu(nu, problem.n, problem.k), gamma)?;
        prior.check_against(problem)?;
        Ok(prior)
    }

    /// `C = I`, `γ = 1`.
    pub fn identity(l: usize, a: f64) -> Result<Self> {
        PriorSpec::new(DVector::from_element(l, 1.0), a, 1.0)
    }

    pub fn check_against(&self, problem: &CanonicalProblem) -> Result<()> {
        if self.c.len() != problem.l {
            return Err(Error::Dimension(format!(
                "prior has {} entries in C, problem has l = {}",
                self.c.len(),
                problem.l
            )));
        }
        let floor = -(problem.k as f64) / 2.0 - 1.0;
        if !(self.a > floor) {
            return Err(Error::InvalidParameter(format!(
                "a must exceed -k/2 - 1 = {floor}, got {}",
                self.a
            )));
        }
        Ok(())
    }

    pub fn nu(&self, problem: &CanonicalProblem) -> f64 {
        nu_of_a(self.a, problem.n, problem.k)
    }

    /// `b(α) = (1 − α)m/4 + (n − k)/2 − 1`
    pub fn b_of_alpha(&self, problem: &CanonicalProblem, alpha: Alpha) -> f64 {
        alpha.complement() * problem.m as f64 / 4.0 + problem.dof() as f64 / 2.0 - 1.0
    }
}

/// `ν = (k + 2a + 2)/(n − k)`
pub fn nu_of_a(a: f64, n: usize, k: usize) -> f64 {
    (k as f64 + 2.0 * a + 2.0) / (n - k) as f64
}

/// Inverse of [`nu_of_a`].
pub fn a_of_nu(nu: f64, n: usize, k: usize) -> f64 {
    (nu * (n - k) as f64 - k as f64 - 2.0) / 2.0
}

/// `Σ_U`, `θ̂_B`, `Σ_B` and `R(v)` for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageComponents {
    pub sigma_u: DMatrix<f64>,
    pub theta_hat_b: DVector<f64>,
    pub sigma_b: DMatrix<f64>,
    pub r: f64,
}

/// Per-coordinate coefficients of the shrinkage factor, independent of the
/// data: `θ̂_B,i = shrink_i v_i` and `R = Σ residual_i v_i²`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ShrinkageCoefficients {
    pub shrink: DVector<f64>,
    pub residual: DVector<f64>,
    /// Diagonal of `(C − I)D(C + (1−α)D/2)⁻¹`.
    pub spread: DVector<f64>,
}

impl ShrinkageCoefficients {
    pub fn new(d: &DVector<f64>, c: &DVector<f64>, alpha: Alpha) -> Self {
        let h = alpha.complement() / 2.0;
        let l = d.len();
        let mut shrink = DVector::zeros(l);
        let mut residual = DVector::zeros(l);
        let mut spread = DVector::zeros(l);
        for i in 0..l {
            let denom = c[i] + h * d[i];
            shrink[i] = (c[i] - 1.0) / denom;
            residual[i] = (1.0 + h * d[i]) / (d[i] * denom);
            spread[i] = (c[i] - 1.0) * d[i] / denom;
        }
        ShrinkageCoefficients {
            shrink,
            residual,
            spread,
        }
    }
}

/// `(2/(1−α))I + Q diag(diag) Q'`
pub(crate) fn scaled_identity_plus(q: &DMatrix<f64>, diag: &DVector<f64>, alpha: Alpha) -> DMatrix<f64> {
    let m = q.nrows();
    let mut sigma = DMatrix::identity(m, m) * (2.0 / alpha.complement());
    sigma += q * DMatrix::from_diagonal(diag) * q.transpose();
    (&sigma + sigma.transpose()) * 0.5
}

pub(crate) fn require_below_one(alpha: Alpha) -> Result<()> {
    if alpha.is_one() {
        return Err(Error::Unsupported(
            "alpha = 1 has no t-form density; use the plug-in density",
        ));
    }
    Ok(())
}

pub fn shrinkage_components(
    problem: &CanonicalProblem,
    prior: &PriorSpec,
    alpha: Alpha,
    v: &DVector<f64>,
) -> Result<ShrinkageComponents> {
    require_below_one(alpha)?;
    prior.check_against(problem)?;
    if v.len() != problem.l {
        return Err(Error::Dimension(format!(
            "v has {} entries, expected {}",
            v.len(),
            problem.l
        )));
    }
    let coef = ShrinkageCoefficients::new(&problem.d, &prior.c, alpha);
    let theta_hat_b = v.component_mul(&coef.shrink);
    let r = v.iter().zip(coef.residual.iter()).map(|(vi, ri)| ri * vi * vi).sum();
    Ok(ShrinkageComponents {
        sigma_u: scaled_identity_plus(&problem.q, &problem.d, alpha),
        theta_hat_b,
        sigma_b: scaled_identity_plus(&problem.q, &coef.spread, alpha),
        r,
    })
}
