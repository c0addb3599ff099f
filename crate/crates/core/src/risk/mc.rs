use std::f64::consts::PI;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{d1_loss_plugin, f_alpha_log, RiskEstimate};
use crate::canonical::{CanonicalObservation, CanonicalParams, CanonicalProblem};
use crate::error::{Error, Result};
use crate::predictive::{Alpha, PluginEstimate, PredictiveDensity};
use crate::rng::{stream_rng, Domain};
use crate::summary::MeanSe;

/// Largest fraction of outer replications that may be excluded for failed
/// normalization before the whole estimate is rejected.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

const MIN_INNER: usize = 100;
const MIN_REPS: usize = 100;
const MIN_REPS_OUTER: usize = 50;

/// Monte Carlo estimate of `D_α(p̂, p(·|θ, η))`. For `α < 1` the draws
/// come from the true density `N_m(Qθ, η⁻¹I)`; for `α = 1` they come from
/// `p̂`, so the average is of `ln(p̂/p)`.
pub fn alpha_divergence_mc(
    phat: &PredictiveDensity,
    theta: &DVector<f64>,
    eta: f64,
    problem: &CanonicalProblem,
    alpha: Alpha,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    divergence_on_stream(phat, theta, eta, problem, alpha, n_mc, seed, 0)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn divergence_on_stream(
    phat: &PredictiveDensity,
    theta: &DVector<f64>,
    eta: f64,
    problem: &CanonicalProblem,
    alpha: Alpha,
    n_mc: usize,
    seed: u64,
    stream: u64,
) -> Result<RiskEstimate> {
    if n_mc < MIN_INNER {
        return Err(Error::InvalidParameter(format!(
            "divergence Monte Carlo needs at least {MIN_INNER} draws, got {n_mc}"
        )));
    }
    if theta.len() != problem.l || phat.dim() != problem.m {
        return Err(Error::Dimension("density, parameter and problem disagree".into()));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let mean = &problem.q * theta;
    let m = problem.m;
    let log_const = 0.5 * m as f64 * (eta / (2.0 * PI)).ln();
    let log_truth = |y: &DVector<f64>| log_const - 0.5 * eta * (y - &mean).norm_squared();
    let sd = 1.0 / eta.sqrt();
    let mut rng = stream_rng(seed, Domain::Divergence, stream);
    let mut values = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let value = if alpha.is_one() {
            let y = phat.sample(&mut rng)?;
            phat.log_density(&y) - log_truth(&y)
        } else {
            let y = DVector::from_iterator(
                m,
                mean.iter().map(|mu| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + sd * z
                }),
            );
            f_alpha_log(phat.log_density(&y) - log_truth(&y), alpha)
        };
        if !value.is_finite() {
            return Err(Error::NonFinite("divergence integrand"));
        }
        values.push(value);
    }
    Ok(RiskEstimate::from_losses(&values, seed))
}

/// Per-replication `D_1` losses of a plug-in procedure; replication `r`
/// uses observation stream `r` of `seed`, so two procedures run with the
/// same seed see the same data.
pub fn d1_losses<P>(
    procedure: &P,
    problem: &CanonicalProblem,
    params: &CanonicalParams,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>>
where
    P: Fn(&CanonicalObservation) -> Result<PluginEstimate> + Sync,
{
    problem.check_params(params)?;
    let sigma2 = params.sigma2();
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let obs = problem.simulate_seeded(params, seed, r as u64)?;
            let est = procedure(&obs)?;
            d1_loss_plugin(&est.theta_hat, est.sigma2_hat, &params.theta, sigma2, problem.m)
        })
        .collect()
}

pub fn risk_d1_mc<P>(
    procedure: &P,
    problem: &CanonicalProblem,
    params: &CanonicalParams,
    reps: usize,
    seed: u64,
) -> Result<RiskEstimate>
where
    P: Fn(&CanonicalObservation) -> Result<PluginEstimate> + Sync,
{
    if reps < MIN_REPS {
        return Err(Error::InvalidParameter(format!(
            "risk needs at least {MIN_REPS} replications, got {reps}"
        )));
    }
    Ok(RiskEstimate::from_losses(
        &d1_losses(procedure, problem, params, reps, seed)?,
        seed,
    ))
}

/// Outcome of a nested α-divergence risk run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRiskRun {
    pub estimate: RiskEstimate,
    /// Inner estimate per replication, `None` where it was excluded.
    pub losses: Vec<Option<f64>>,
    /// Mean over replications of the inner standard errors.
    pub mean_inner_std_error: f64,
}

fn excludable(e: &Error) -> bool {
    matches!(e, Error::UnreliableNormalization { .. } | Error::NonFinite(_))
}

/// Risk of a density-valued procedure: outer replications over
/// observations, inner [`alpha_divergence_mc`] per observation. The
/// builder receives the replication index for its own random stream.
#[allow(clippy::too_many_arguments)]
pub fn risk_alpha_mc<B>(
    builder: &B,
    problem: &CanonicalProblem,
    params: &CanonicalParams,
    alpha: Alpha,
    reps_outer: usize,
    n_mc_inner: usize,
    seed: u64,
) -> Result<AlphaRiskRun>
where
    B: Fn(&CanonicalObservation, u64) -> Result<PredictiveDensity> + Sync,
{
    if reps_outer < MIN_REPS_OUTER {
        return Err(Error::InvalidParameter(format!(
            "risk needs at least {MIN_REPS_OUTER} outer replications, got {reps_outer}"
        )));
    }
    problem.check_params(params)?;
    let outcomes: Vec<Result<Option<(f64, f64)>>> = (0..reps_outer)
        .into_par_iter()
        .map(|r| {
            let r = r as u64;
            let obs = problem.simulate_seeded(params, seed, r)?;
            let inner = builder(&obs, r).and_then(|phat| {
                divergence_on_stream(&phat, &params.theta, params.eta, problem, alpha, n_mc_inner, seed, r)
            });
            match inner {
                Ok(est) => Ok(Some((est.mean, est.std_error))),
                Err(e) if excludable(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut losses = Vec::with_capacity(reps_outer);
    let mut inner_se = Vec::with_capacity(reps_outer);
    for outcome in outcomes {
        match outcome? {
            Some((loss, se)) => {
                losses.push(Some(loss));
                inner_se.push(se);
            }
            None => losses.push(None),
        }
    }
    let kept: Vec<f64> = losses.iter().flatten().copied().collect();
    let excluded = reps_outer - kept.len();
    if excluded as f64 > MAX_EXCLUDED_FRACTION * reps_outer as f64 {
        return Err(Error::ExclusionCeiling {
            excluded,
            total: reps_outer,
        });
    }
    let mut estimate = RiskEstimate::from_losses(&kept, seed);
    estimate.excluded = excluded;
    Ok(AlphaRiskRun {
        estimate,
        losses,
        mean_inner_std_error: MeanSe::from_samples(&inner_se).mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictive::{plugin_density, umvu_estimators};
    use nalgebra::DMatrix;

    fn problem() -> CanonicalProblem {
        CanonicalProblem::from_canonical(12, 3, DVector::from_element(3, 0.25), DMatrix::identity(3, 3)).unwrap()
    }

    #[test]
    fn identical_densities_have_zero_divergence() {
        let p = problem();
        let theta = DVector::from_vec(vec![1.0, 0.0, -2.0]);
        let est = PluginEstimate {
            theta_hat: theta.clone(),
            sigma2_hat: 2.0,
            w: 0.0,
        };
        let phat = plugin_density(&est, &p).unwrap();
        for a in [-1.0, 0.0, 1.0] {
            let r = alpha_divergence_mc(&phat, &theta, 0.5, &p, Alpha::new(a).unwrap(), 500, 3).unwrap();
            assert!(r.mean.abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let p = problem();
        let params = CanonicalParams::new(DVector::zeros(3), DVector::zeros(0), 1.0).unwrap();
        let proc = |obs: &CanonicalObservation| umvu_estimators(&p, obs);
        let a = risk_d1_mc(&proc, &p, &params, 200, 11).unwrap();
        let b = risk_d1_mc(&proc, &p, &params, 200, 11).unwrap();
        assert_eq!(a, b);
        let too_few = alpha_divergence_mc(
            &plugin_density(
                &umvu_estimators(&p, &p.simulate_seeded(&params, 1, 0).unwrap()).unwrap(),
                &p,
            )
            .unwrap(),
            &params.theta,
            1.0,
            &p,
            Alpha::new(0.0).unwrap(),
            10,
            1,
        );
        assert!(too_few.is_err());
    }
}
