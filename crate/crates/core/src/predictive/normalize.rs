use nalgebra::DVector;
use rayon::prelude::*;

use super::density::{Kernel, Normalization, PredictiveDensity, ShrinkageBayes};
use super::plugin::{plugin_bayes_estimators, plugin_density};
use super::{Alpha, PriorSpec};
use crate::canonical::{CanonicalObservation, CanonicalProblem};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::summary::pairwise_sum;

/// Importance sampling fails when the effective sample size drops below
/// this fraction of the draws.
pub const MIN_ESS_FRACTION: f64 = 0.05;

const BLOCK: usize = 1024;

/// Importance-sampling estimate of `ln ∫ kernel` with `proposal` as the
/// sampling density.
pub fn normalize_density(
    kernel: Kernel,
    proposal: &PredictiveDensity,
    n_samples: usize,
    seed: u64,
) -> Result<PredictiveDensity> {
    normalize_on_stream(kernel, proposal, n_samples, seed, 0)
}

/// As [`normalize_density`], drawing from stream `stream` of `seed` so that
/// independent normalizations (one per replication, say) do not share
/// draws.
pub fn normalize_on_stream(
    kernel: Kernel,
    proposal: &PredictiveDensity,
    n_samples: usize,
    seed: u64,
    stream: u64,
) -> Result<PredictiveDensity> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter(
            "importance sampling needs at least 2 draws".into(),
        ));
    }
    if kernel.dim() != proposal.dim() {
        return Err(Error::Dimension("target and proposal dimensions differ".into()));
    }
    let n_blocks = n_samples.div_ceil(BLOCK);
    let blocks: Vec<Result<Vec<f64>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, Domain::Normalization, (stream << 32) | b as u64);
            let count = BLOCK.min(n_samples - b * BLOCK);
            (0..count)
                .map(|_| {
                    let y = proposal.sample(&mut rng)?;
                    Ok(kernel.log_value(&y) - proposal.kernel.log_value(&y) + proposal.log_norm_const)
                })
                .collect()
        })
        .collect();
    let mut log_w = Vec::with_capacity(n_samples);
    for block in blocks {
        log_w.extend(block?);
    }
    if log_w.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("importance weights"));
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NonFinite("importance weights"));
    }
    let w: Vec<f64> = log_w.iter().map(|lw| (lw - top).exp()).collect();
    let n = n_samples as f64;
    let sum = pairwise_sum(&w);
    let mean = sum / n;
    let sq: Vec<f64> = w.iter().map(|x| x * x).collect();
    let ess = sum * sum / pairwise_sum(&sq);
    if ess < MIN_ESS_FRACTION * n {
        return Err(Error::UnreliableNormalization { ess, n_samples });
    }
    let dev: Vec<f64> = w.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    Ok(PredictiveDensity {
        kernel,
        log_norm_const: top + mean.ln(),
        normalization: Normalization::ImportanceSampled {
            n_samples,
            seed,
            std_error: (var / n).sqrt() / mean,
            effective_sample_size: ess,
        },
    })
}

impl ShrinkageBayes {
    /// Density normalized by importance sampling from the best invariant
    /// density.
    pub fn density(
        &self,
        obs: &CanonicalObservation,
        n_samples: usize,
        seed: u64,
        stream: u64,
    ) -> Result<PredictiveDensity> {
        let proposal = self.best_invariant().density(obs)?;
        normalize_on_stream(self.kernel(obs)?, &proposal, n_samples, seed, stream)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGap {
    pub alpha: f64,
    pub log_density: f64,
    pub plugin_log_density: f64,
    pub gap: f64,
    /// Standard error of the normalized log-density, from normalization.
    pub std_error: f64,
}

/// Distance between the normalized `α < 1` density and the `α = 1`
/// plug-in density at `ytilde`, along an increasing sequence of `α`.
pub fn alpha_limit_check(
    problem: &CanonicalProblem,
    prior: &PriorSpec,
    obs: &CanonicalObservation,
    ytilde: &DVector<f64>,
    alphas: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<AlphaGap>> {
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("alpha sequence must be increasing".into()));
    }
    if alphas.iter().any(|&a| a >= 1.0) {
        return Err(Error::InvalidParameter("alpha sequence must stay below 1".into()));
    }
    let plugin = plugin_density(&plugin_bayes_estimators(problem, prior, obs)?, problem)?;
    let plugin_log_density = plugin.log_density(ytilde);
    alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let sb = ShrinkageBayes::new(problem, prior, Alpha::new(a)?)?;
            let density = sb.density(obs, n_samples, seed, i as u64)?;
            let std_error = match density.normalization {
                Normalization::ImportanceSampled { std_error, .. } => std_error,
                Normalization::ClosedForm => 0.0,
            };
            let log_density = density.log_density(ytilde);
            Ok(AlphaGap {
                alpha: a,
                log_density,
                plugin_log_density,
                gap: (log_density - plugin_log_density).abs(),
                std_error,
            })
        })
        .collect()
}
