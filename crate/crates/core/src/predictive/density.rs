use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{require_below_one, scaled_identity_plus, Alpha, PriorSpec, ShrinkageCoefficients, ShrinkageComponents};
use crate::canonical::{CanonicalObservation, CanonicalProblem};
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::special::ln_gamma;

/// `ỹ ↦ −exponent · ln{(ỹ − center)'Σ⁻¹(ỹ − center) + shift}`
#[derive(Debug, Clone)]
pub struct TKernel {
    pub center: DVector<f64>,
    pub scale: Arc<SpdFactor>,
    pub shift: f64,
    pub exponent: f64,
}

impl TKernel {
    pub fn log_value(&self, y: &DVector<f64>) -> f64 {
        let q = self.scale.quad_form(&(y - &self.center));
        -self.exponent * (q + self.shift).ln()
    }
}

/// Unnormalized log-density of a predictive distribution.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// Multivariate-t kernel with `dof` degrees of freedom; the exponent is
    /// `(dof + m)/2`.
    Student {
        t: TKernel,
        dof: f64,
    },
    Product {
        first: TKernel,
        second: TKernel,
    },
    Gaussian {
        mean: DVector<f64>,
        sigma2: f64,
    },
}

impl Kernel {
    pub fn dim(&self) -> usize {
        match self {
            Kernel::Student { t, .. } => t.center.len(),
            Kernel::Product { first, .. } => first.center.len(),
            Kernel::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn log_value(&self, y: &DVector<f64>) -> f64 {
        match self {
            Kernel::Student { t, .. } => t.log_value(y),
            Kernel::Product { first, second } => first.log_value(y) + second.log_value(y),
            Kernel::Gaussian { mean, sigma2 } => -(y - mean).norm_squared() / (2.0 * sigma2),
        }
    }

    /// `ln ∫ exp(log_value)` when it has a closed form.
    pub fn closed_form_log_normalizer(&self) -> Option<f64> {
        match self {
            Kernel::Student { t, dof } => {
                let m = t.center.len() as f64;
                Some(
                    -0.5 * dof * t.shift.ln() + ln_gamma(0.5 * dof) + 0.5 * m * PI.ln() + 0.5 * t.scale.log_det()
                        - ln_gamma(t.exponent),
                )
            }
            Kernel::Gaussian { mean, sigma2 } => Some(0.5 * mean.len() as f64 * (2.0 * PI * sigma2).ln()),
            Kernel::Product { .. } => None,
        }
    }

    /// One draw from the normalized density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let m = self.dim();
        let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
        match self {
            Kernel::Student { t, dof } => {
                let g: f64 = ChiSquared::new(*dof).expect("positive dof").sample(rng);
                let radius = (t.shift / g).sqrt();
                Ok(&t.center + t.scale.lower() * z * radius)
            }
            Kernel::Gaussian { mean, sigma2 } => Ok(mean + z * sigma2.sqrt()),
            Kernel::Product { .. } => Err(Error::Unsupported("sampling from a product kernel")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    ClosedForm,
    ImportanceSampled {
        n_samples: usize,
        seed: u64,
        /// Standard error of the log normalizing constant.
        std_error: f64,
        effective_sample_size: f64,
    },
}

/// A kernel together with `ln ∫ kernel`.
#[derive(Debug, Clone)]
pub struct PredictiveDensity {
    pub kernel: Kernel,
    pub log_norm_const: f64,
    pub normalization: Normalization,
}

impl PredictiveDensity {
    pub fn closed_form(kernel: Kernel) -> Result<Self> {
        let log_norm_const = kernel.closed_form_log_normalizer().ok_or(Error::MissingNormalization)?;
        Ok(PredictiveDensity {
            kernel,
            log_norm_const,
            normalization: Normalization::ClosedForm,
        })
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn log_unnormalized(&self, y: &DVector<f64>) -> f64 {
        self.kernel.log_value(y)
    }

    pub fn log_density(&self, y: &DVector<f64>) -> f64 {
        self.kernel.log_value(y) - self.log_norm_const
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        self.kernel.sample(rng)
    }
}

/// Best invariant predictive density for a fixed problem and `α < 1`.
#[derive(Debug, Clone)]
pub struct BestInvariant {
    q: nalgebra::DMatrix<f64>,
    sigma_u: Arc<SpdFactor>,
    exponent: f64,
    dof: f64,
}

impl BestInvariant {
    pub fn new(problem: &CanonicalProblem, alpha: Alpha) -> Result<Self> {
        require_below_one(alpha)?;
        let sigma_u = scaled_identity_plus(&problem.q, &problem.d, alpha);
        let dof = 2.0 * problem.dof() as f64 / alpha.complement();
        Ok(BestInvariant {
            q: problem.q.clone(),
            sigma_u: Arc::new(SpdFactor::new(&sigma_u, "Sigma_U")?),
            exponent: 0.5 * problem.m as f64 + 0.5 * dof,
            dof,
        })
    }

    /// `m/2 + (n − k)/(1 − α)`
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `ν_α = 2(n − k)/(1 − α)`
    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn kernel(&self, obs: &CanonicalObservation) -> Result<Kernel> {
        obs.require_positive_s()?;
        if obs.v.len() != self.q.ncols() {
            return Err(Error::Dimension(format!(
                "V has {} entries, expected {}",
                obs.v.len(),
                self.q.ncols()
            )));
        }
        Ok(Kernel::Student {
            t: TKernel {
                center: &self.q * &obs.v,
                scale: Arc::clone(&self.sigma_u),
                shift: obs.s,
                exponent: self.exponent,
            },
            dof: self.dof,
        })
    }

    pub fn density(&self, obs: &CanonicalObservation) -> Result<PredictiveDensity> {
        PredictiveDensity::closed_form(self.kernel(obs)?)
    }
}

pub fn log_best_invariant(
    problem: &CanonicalProblem,
    obs: &CanonicalObservation,
    alpha: Alpha,
    ytilde: &DVector<f64>,
) -> Result<f64> {
    problem.check_observation(obs)?;
    check_point(problem, ytilde)?;
    Ok(BestInvariant::new(problem, alpha)?.kernel(obs)?.log_value(ytilde))
}

pub fn best_invariant_normalizer(problem: &CanonicalProblem, obs: &CanonicalObservation, alpha: Alpha) -> Result<f64> {
    problem.check_observation(obs)?;
    Ok(BestInvariant::new(problem, alpha)?.density(obs)?.log_norm_const)
}

fn check_point(problem: &CanonicalProblem, ytilde: &DVector<f64>) -> Result<()> {
    if ytilde.len() != problem.m {
        return Err(Error::Dimension(format!(
            "prediction point has {} entries, expected m = {}",
            ytilde.len(),
            problem.m
        )));
    }
    Ok(())
}

/// Generalized Bayes predictive density under the hierarchical prior for a
/// fixed problem, prior and `α < 1`.
#[derive(Debug, Clone)]
pub struct ShrinkageBayes {
    invariant: BestInvariant,
    coef: ShrinkageCoefficients,
    sigma_b: Arc<SpdFactor>,
    sigma_b_matrix: nalgebra::DMatrix<f64>,
    sigma_u_matrix: nalgebra::DMatrix<f64>,
    exponent: f64,
    gamma: f64,
    q: nalgebra::DMatrix<f64>,
}

impl ShrinkageBayes {
    pub fn new(problem: &CanonicalProblem, prior: &PriorSpec, alpha: Alpha) -> Result<Self> {
        require_below_one(alpha)?;
        prior.check_against(problem)?;
        let invariant = BestInvariant::new(problem, alpha)?;
        let coef = ShrinkageCoefficients::new(&problem.d, &prior.c, alpha);
        let sigma_b_matrix = scaled_identity_plus(&problem.q, &coef.spread, alpha);
        Ok(ShrinkageBayes {
            invariant,
            sigma_b: Arc::new(SpdFactor::new(&sigma_b_matrix, "Sigma_B")?),
            sigma_b_matrix,
            sigma_u_matrix: scaled_identity_plus(&problem.q, &problem.d, alpha),
            coef,
            exponent: (problem.k as f64 + 2.0 * prior.a + 2.0) / alpha.complement(),
            gamma: prior.gamma,
            q: problem.q.clone(),
        })
    }

    pub fn best_invariant(&self) -> &BestInvariant {
        &self.invariant
    }

    /// `(k + 2a + 2)/(1 − α)`
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn components(&self, v: &DVector<f64>) -> ShrinkageComponents {
        ShrinkageComponents {
            sigma_u: self.sigma_u_matrix.clone(),
            theta_hat_b: v.component_mul(&self.coef.shrink),
            sigma_b: self.sigma_b_matrix.clone(),
            r: v.iter()
                .zip(self.coef.residual.iter())
                .map(|(vi, ri)| ri * vi * vi)
                .sum(),
        }
    }

    /// Kernel of the second factor `p̌_α`.
    pub fn shrinkage_factor(&self, obs: &CanonicalObservation) -> Result<TKernel> {
        obs.require_positive_s()?;
        let theta_b = obs.v.component_mul(&self.coef.shrink);
        let r: f64 = obs
            .v
            .iter()
            .zip(self.coef.residual.iter())
            .map(|(vi, ri)| ri * vi * vi)
            .sum();
        // V* is empty when m ≥ k, so the term vanishes there
        let shift = r + obs.v_star.norm_squared() / self.gamma + obs.s;
        Ok(TKernel {
            center: &self.q * theta_b,
            scale: Arc::clone(&self.sigma_b),
            shift,
            exponent: self.exponent,
        })
    }

    pub fn kernel(&self, obs: &CanonicalObservation) -> Result<Kernel> {
        let Kernel::Student { t, .. } = self.invariant.kernel(obs)? else {
            unreachable!("best invariant kernel is a t kernel")
        };
        Ok(Kernel::Product {
            first: t,
            second: self.shrinkage_factor(obs)?,
        })
    }
}

pub fn log_shrinkage_bayes(
    problem: &CanonicalProblem,
    prior: &PriorSpec,
    obs: &CanonicalObservation,
    alpha: Alpha,
    ytilde: &DVector<f64>,
) -> Result<f64> {
    problem.check_observation(obs)?;
    check_point(problem, ytilde)?;
    Ok(ShrinkageBayes::new(problem, prior, alpha)?
        .kernel(obs)?
        .log_value(ytilde))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn setup() -> (CanonicalProblem, CanonicalObservation) {
        let q = DMatrix::from_row_slice(2, 1, &[0.6, 0.8]);
        let p = CanonicalProblem::from_canonical(10, 1, DVector::from_vec(vec![0.7]), q).unwrap();
        let obs = CanonicalObservation::new(DVector::from_vec(vec![1.5]), DVector::zeros(0), 3.0).unwrap();
        (p, obs)
    }

    #[test]
    fn value_at_center_is_power_of_s() {
        let (p, obs) = setup();
        let alpha = Alpha::new(0.3).unwrap();
        let center = &p.q * &obs.v;
        let got = log_best_invariant(&p, &obs, alpha, &center).unwrap();
        let e = 1.0 + 9.0 / 0.7;
        assert!((got - (-e * 3.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn degenerate_observation() {
        let (p, _) = setup();
        let obs = CanonicalObservation::new(DVector::from_vec(vec![1.5]), DVector::zeros(0), 0.0).unwrap();
        let y = DVector::zeros(2);
        assert!(matches!(
            log_best_invariant(&p, &obs, Alpha::new(0.0).unwrap(), &y),
            Err(Error::DegenerateObservation)
        ));
    }

    #[test]
    fn factorization_is_exact() {
        let (p, obs) = setup();
        let prior = PriorSpec::new(DVector::from_vec(vec![2.5]), 0.5, 1.0).unwrap();
        let alpha = Alpha::new(-0.4).unwrap();
        let sb = ShrinkageBayes::new(&p, &prior, alpha).unwrap();
        let y = DVector::from_vec(vec![0.3, -1.1]);
        let total = log_shrinkage_bayes(&p, &prior, &obs, alpha, &y).unwrap();
        let first = log_best_invariant(&p, &obs, alpha, &y).unwrap();
        let second = sb.shrinkage_factor(&obs).unwrap().log_value(&y);
        assert_eq!(total, first + second);
    }

    #[test]
    fn gaussian_normalizer() {
        let k = Kernel::Gaussian {
            mean: DVector::from_vec(vec![1.0, 2.0]),
            sigma2: 0.5,
        };
        let d = PredictiveDensity::closed_form(k).unwrap();
        assert!((d.log_density(&DVector::from_vec(vec![1.0, 2.0])) + (2.0 * PI * 0.5).ln()).abs() < 1e-14);
    }
}
