//! Plug-in estimators of `(θ, σ²)` and the normal predictive density
//! `N_m(Qθ̂, σ̂² I)` built from them.

use nalgebra::DVector;

use super::density::{Kernel, PredictiveDensity};
use super::PriorSpec;
use crate::canonical::{CanonicalObservation, CanonicalProblem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PluginEstimate {
    pub theta_hat: DVector<f64>,
    pub sigma2_hat: f64,
    /// `{V'C⁻¹D⁻¹V + ‖V*‖²/γ}/S`
    pub w: f64,
}

fn statistic_w(problem: &CanonicalProblem, c: &DVector<f64>, gamma: f64, obs: &CanonicalObservation) -> f64 {
    let quad: f64 = (0..problem.l)
        .map(|i| obs.v[i] * obs.v[i] / (c[i] * problem.d[i]))
        .sum();
    (quad + obs.v_star.norm_squared() / gamma) / obs.s
}

/// Generalized Bayes estimators under the hierarchical prior; `nu` is
/// taken directly, so the boundary `ν = 0` is allowed here.
pub fn plugin_estimate_with_nu(
    problem: &CanonicalProblem,
    c: &DVector<f64>,
    gamma: f64,
    nu: f64,
    obs: &CanonicalObservation,
) -> Result<PluginEstimate> {
    problem.check_observation(obs)?;
    obs.require_positive_s()?;
    if c.len() != problem.l {
        return Err(Error::Dimension(format!(
            "C has {} entries, expected {}",
            c.len(),
            problem.l
        )));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!("nu must be nonnegative, got {nu}")));
    }
    let w = statistic_w(problem, c, gamma, obs);
    let factor = nu / (nu + 1.0 + w);
    let theta_hat = DVector::from_iterator(problem.l, (0..problem.l).map(|i| (1.0 - factor / c[i]) * obs.v[i]));
    Ok(PluginEstimate {
        theta_hat,
        sigma2_hat: (1.0 - factor) * obs.s / problem.dof() as f64,
        w,
    })
}

pub fn plugin_bayes_estimators(
    problem: &CanonicalProblem,
    prior: &PriorSpec,
    obs: &CanonicalObservation,
) -> Result<PluginEstimate> {
    prior.check_against(problem)?;
    plugin_estimate_with_nu(problem, &prior.c, prior.gamma, prior.nu(problem), obs)
}

pub fn umvu_estimators(problem: &CanonicalProblem, obs: &CanonicalObservation) -> Result<PluginEstimate> {
    problem.check_observation(obs)?;
    obs.require_positive_s()?;
    let ones = DVector::from_element(problem.l, 1.0);
    Ok(PluginEstimate {
        theta_hat: obs.v.clone(),
        sigma2_hat: obs.s / problem.dof() as f64,
        w: statistic_w(problem, &ones, 1.0, obs),
    })
}

pub fn plugin_density(est: &PluginEstimate, problem: &CanonicalProblem) -> Result<PredictiveDensity> {
    if est.theta_hat.len() != problem.l {
        return Err(Error::Dimension("estimate does not match problem".into()));
    }
    if !(est.sigma2_hat > 0.0) {
        return Err(Error::InvalidParameter("plug-in variance must be positive".into()));
    }
    PredictiveDensity::closed_form(Kernel::Gaussian {
        mean: &problem.q * &est.theta_hat,
        sigma2: est.sigma2_hat,
    })
}

/// `min{S/(n−k), (V'D⁻¹V + S)/(l + n − k)}`
pub fn stein_variance(problem: &CanonicalProblem, obs: &CanonicalObservation) -> Result<f64> {
    problem.check_observation(obs)?;
    obs.require_positive_s()?;
    let p = problem.dof() as f64;
    let quad: f64 = (0..problem.l).map(|i| obs.v[i] * obs.v[i] / problem.d[i]).sum();
    Ok((obs.s / p).min((quad + obs.s) / (problem.l as f64 + p)))
}

/// `min{S/(n−k), (‖V*‖² + S)/(n − l)}`; requires `V*` to be present.
pub fn stein_variance_star(problem: &CanonicalProblem, obs: &CanonicalObservation) -> Result<f64> {
    problem.check_observation(obs)?;
    obs.require_positive_s()?;
    if obs.v_star.is_empty() {
        return Err(Error::Unsupported("V* is empty when m >= k"));
    }
    let p = problem.dof() as f64;
    Ok((obs.s / p).min((obs.v_star.norm_squared() + obs.s) / (problem.n - problem.l) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn three() -> CanonicalProblem {
        CanonicalProblem::from_canonical(12, 3, DVector::from_element(3, 1.0), DMatrix::identity(3, 3)).unwrap()
    }

    #[test]
    fn hand_worked_example() {
        let p = three();
        let obs = CanonicalObservation::new(DVector::from_vec(vec![1.0, 2.0, 2.0]), DVector::zeros(0), 9.0).unwrap();
        let est = plugin_estimate_with_nu(&p, &DVector::from_element(3, 1.0), 1.0, 0.2, &obs).unwrap();
        assert!((est.w - 1.0).abs() < 1e-15);
        for i in 0..3 {
            assert!((est.theta_hat[i] - obs.v[i] * 10.0 / 11.0).abs() < 1e-14);
        }
        assert!((est.sigma2_hat - 10.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn zero_nu_is_umvu() {
        let p = three();
        let obs = CanonicalObservation::new(DVector::from_vec(vec![0.5, -1.0, 3.0]), DVector::zeros(0), 18.0).unwrap();
        let est = plugin_estimate_with_nu(&p, &DVector::from_element(3, 2.0), 1.0, 0.0, &obs).unwrap();
        let umvu = umvu_estimators(&p, &obs).unwrap();
        assert_eq!(est.theta_hat, obs.v);
        assert_eq!(umvu.theta_hat, obs.v);
        assert_eq!(umvu.sigma2_hat, 2.0);
        assert_eq!(est.sigma2_hat, 2.0);
    }

    #[test]
    fn stein_examples() {
        let p = three();
        // V'D⁻¹V = 9
        let obs = CanonicalObservation::new(DVector::from_vec(vec![1.0, 2.0, 2.0]), DVector::zeros(0), 18.0).unwrap();
        assert_eq!(stein_variance(&p, &obs).unwrap(), 2.0);
        let zero = CanonicalObservation::new(DVector::zeros(3), DVector::zeros(0), 18.0).unwrap();
        assert!((stein_variance(&p, &zero).unwrap() - 18.0 / 12.0).abs() < 1e-15);
        assert!(matches!(stein_variance_star(&p, &obs), Err(Error::Unsupported(_))));
    }

    #[test]
    fn density_at_mean() {
        let p = three();
        let est = PluginEstimate {
            theta_hat: DVector::from_vec(vec![1.0, 0.0, -1.0]),
            sigma2_hat: 0.7,
            w: 0.0,
        };
        let d = plugin_density(&est, &p).unwrap();
        let at = d.log_density(&est.theta_hat);
        assert!((at + 1.5 * (2.0 * std::f64::consts::PI * 0.7).ln()).abs() < 1e-14);
    }
}
