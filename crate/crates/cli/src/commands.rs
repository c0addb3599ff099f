//! The subcommands. Each writes its result files into `out` and returns a
//! short human-readable summary.

use std::fs;
use std::path::Path;

use alphapred::bounds::{a_of_nu_checked, condition_d, nu_limits, rescale_c_for_positivity};
use alphapred::canonical::{CanonicalObservation, CanonicalProblem};
use alphapred::identities::{
    beta_suite, chi_square_suite, lemma_suite, log_inequality_suite, IdentityReport, BETA_TOLERANCE, LEMMA_TOLERANCE,
};
use alphapred::io::{format_f64, problem_to_json, to_json_string};
use alphapred::predictive::{
    plugin_bayes_estimators, plugin_density, stein_variance, stein_variance_star, umvu_estimators, Alpha,
    BestInvariant, PluginEstimate, PredictiveDensity, PriorSpec, ShrinkageBayes,
};
use alphapred::risk::{d1_losses, minimax_risk, paired_difference, risk_alpha_mc, RiskEstimate};
use alphapred::rng::derive_seed;
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{ExperimentConfig, GridPoint};
use crate::error::CliError;

/// Procedures compared by `risk-compare`, in output order.
pub const PROCEDURES: [&str; 6] = [
    "umvu",
    "bayes_plugin",
    "stein_st",
    "stein_st_star",
    "best_invariant",
    "shrinkage_bayes",
];

/// A risk is flagged as dominating when it sits below the minimax
/// baseline by more than this many standard errors of the paired
/// difference.
pub const DOMINATION_Z: f64 = 3.0;

fn write(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), contents)?;
    Ok(())
}

pub fn canonicalize(config: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let problem = config.problem()?;
    let report = problem.check_invariants();
    write(out, "problem.json", &problem_to_json(&problem)?)?;
    write(out, "invariants.json", &to_json_string(&report)?)?;
    let mut summary = format!(
        "n = {}, k = {}, m = {}, case {:?}\nD = [{}]\n",
        problem.n,
        problem.k,
        problem.m,
        problem.case(),
        problem
            .d
            .iter()
            .map(|d| format!("{d:.12}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    for w in &problem.warnings {
        summary.push_str(&format!("warning: {w}\n"));
    }
    for c in &report.checks {
        summary.push_str(&format!(
            "{} {}: {:.3e} (tol {:.1e})\n",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance
        ));
    }
    if !report.all_pass() {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        return Err(CliError::Canonical(alphapred::Error::InvalidParameter(format!(
            "invariants failed: {}",
            failed.join(", ")
        ))));
    }
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct BoundsOutput {
    nu1: f64,
    nu2: f64,
    nu3: f64,
    nu_max: f64,
    positive: bool,
    suggested_a: Option<f64>,
    /// Factor `g0` that makes `ν₁` positive for `C = g0 C0`.
    rescale_c: f64,
    condition_d: Option<bool>,
    warnings: Vec<String>,
}

pub fn bounds(config: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let (d, c, m, n, k) = match &config.bounds {
        Some(b) => {
            let c = b.c.clone().unwrap_or_else(|| vec![1.0; b.d.len()]);
            (DVector::from_vec(b.d.clone()), DVector::from_vec(c), b.m, b.n, b.k)
        }
        None => {
            let p = config.problem()?;
            let c = match &config.prior.c {
                Some(c) => DVector::from_column_slice(c),
                None => DVector::from_element(p.l, 1.0),
            };
            (p.d.clone(), c, p.m, p.n, p.k)
        }
    };
    let b = nu_limits(&d, &c, m, n, k).map_err(|e| CliError::Usage(e.to_string()))?;
    let rescale = rescale_c_for_positivity(&d, &c, m, n, k).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut sorted: Vec<f64> = d.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let output = BoundsOutput {
        nu1: b.nu1,
        nu2: b.nu2,
        nu3: b.nu3,
        nu_max: b.nu_max,
        positive: b.positive,
        suggested_a: if b.positive {
            a_of_nu_checked(k, b.nu_max, n).ok()
        } else {
            None
        },
        rescale_c: rescale,
        condition_d: condition_d(&DVector::from_vec(sorted)).ok(),
        warnings: b.warnings.clone(),
    };
    let json = to_json_string(&output)?;
    write(out, "bounds.json", &json)?;
    Ok(json)
}

#[derive(Debug, Serialize)]
struct IdentityOutput {
    seed: u64,
    all_pass: bool,
    identities: Vec<IdentityReport>,
}

pub fn identities(config: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let ic = &config.identities;
    let seed = config.seed;
    let lemma_tol = ic.tolerance.unwrap_or(LEMMA_TOLERANCE);
    let beta_tol = ic.tolerance.unwrap_or(BETA_TOLERANCE);
    let reports = vec![
        lemma_suite(ic.lemma_instances, seed, lemma_tol)?,
        beta_suite(ic.beta_instances, seed, beta_tol)?,
        chi_square_suite(
            ic.chi_square_nu,
            ic.chi_square_dof,
            ic.chi_square_l,
            ic.chi_square_draws,
            seed,
        )?,
        log_inequality_suite(ic.log_grid_points),
    ];
    let all_pass = reports.iter().all(|r| r.pass);
    let mut summary = String::new();
    for r in &reports {
        summary.push_str(&format!(
            "{} {}: {} instances, max gap {:.3e} (tol {:.1e})\n",
            if r.pass { "pass" } else { "FAIL" },
            r.name,
            r.instances,
            r.max_gap,
            r.tolerance
        ));
    }
    let output = IdentityOutput {
        seed,
        all_pass,
        identities: reports,
    };
    write(out, "identities.json", &to_json_string(&output)?)?;
    if !all_pass {
        return Err(CliError::Identity(summary));
    }
    Ok(summary)
}

pub const RISK_HEADER: [&str; 9] = [
    "procedure",
    "alpha",
    "theta_norm",
    "sigma2",
    "reps",
    "risk_mean",
    "risk_se",
    "minimax_risk",
    "dominates_flag",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub procedure: &'static str,
    pub alpha: f64,
    pub theta_norm: f64,
    pub sigma2: f64,
    pub reps: usize,
    pub risk_mean: f64,
    pub risk_se: f64,
    pub minimax_risk: f64,
    pub dominates: bool,
}

impl RiskRow {
    fn record(&self) -> [String; 9] {
        [
            self.procedure.to_string(),
            format_f64(self.alpha),
            format_f64(self.theta_norm),
            format_f64(self.sigma2),
            self.reps.to_string(),
            format_f64(self.risk_mean),
            format_f64(self.risk_se),
            format_f64(self.minimax_risk),
            self.dominates.to_string(),
        ]
    }
}

/// Plug-in estimators, each a map from observation to `(θ̂, σ̂²)`.
struct PluginProcedures<'a> {
    problem: &'a CanonicalProblem,
    prior: Option<&'a PriorSpec>,
}

impl PluginProcedures<'_> {
    fn estimate(&self, name: &str, obs: &CanonicalObservation) -> alphapred::Result<PluginEstimate> {
        let p = self.problem;
        match name {
            "umvu" => umvu_estimators(p, obs),
            "bayes_plugin" => plugin_bayes_estimators(p, self.prior.expect("prior resolved"), obs),
            "stein_st" => {
                let mut est = umvu_estimators(p, obs)?;
                est.sigma2_hat = stein_variance(p, obs)?;
                Ok(est)
            }
            "stein_st_star" => {
                let mut est = umvu_estimators(p, obs)?;
                est.sigma2_hat = stein_variance_star(p, obs)?;
                Ok(est)
            }
            _ => unreachable!("not a plug-in procedure: {name}"),
        }
    }
}

fn applicable(name: &str, problem: &CanonicalProblem, alpha: Alpha) -> bool {
    match name {
        "stein_st_star" => problem.k > problem.l,
        // at α = 1 these coincide with the UMVU and Bayes plug-ins
        "best_invariant" | "shrinkage_bayes" => !alpha.is_one(),
        _ => true,
    }
}

fn dominates(baseline: &[Option<f64>], losses: &[Option<f64>]) -> Result<bool, CliError> {
    let (a, b): (Vec<f64>, Vec<f64>) = baseline
        .iter()
        .zip(losses)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    let diff = paired_difference(&a, &b)?;
    Ok(diff.count >= 2 && diff.mean > DOMINATION_Z * diff.std_error)
}

fn wrap(losses: Vec<f64>) -> Vec<Option<f64>> {
    losses.into_iter().map(Some).collect()
}

/// Risk rows for one `(α, parameter point)`.
fn rows_at(
    config: &ExperimentConfig,
    problem: &CanonicalProblem,
    prior: Option<&PriorSpec>,
    names: &[&'static str],
    point: &GridPoint,
    alpha: Alpha,
    seed: u64,
) -> Result<Vec<RiskRow>, CliError> {
    let procs = PluginProcedures { problem, prior };
    let params = &point.params;
    let row = |procedure, est: RiskEstimate, minimax, dominates| RiskRow {
        procedure,
        alpha: alpha.value(),
        theta_norm: point.theta_norm,
        sigma2: point.sigma2,
        reps: est.reps,
        risk_mean: est.mean,
        risk_se: est.std_error,
        minimax_risk: minimax,
        dominates,
    };
    let mut rows = Vec::new();
    if alpha.is_one() {
        let minimax = minimax_risk(&problem.d, problem.m, problem.n, problem.k)?;
        let baseline = wrap(d1_losses(
            &|o: &CanonicalObservation| procs.estimate("umvu", o),
            problem,
            params,
            config.reps,
            seed,
        )?);
        for &name in names {
            let losses = if name == "umvu" {
                baseline.clone()
            } else {
                wrap(d1_losses(
                    &|o: &CanonicalObservation| procs.estimate(name, o),
                    problem,
                    params,
                    config.reps,
                    seed,
                )?)
            };
            let kept: Vec<f64> = losses.iter().flatten().copied().collect();
            let flag = dominates(&baseline, &losses)?;
            rows.push(row(name, RiskEstimate::from_losses(&kept, seed), minimax, flag));
        }
        return Ok(rows);
    }
    let n_is = config.n_is;
    let best = BestInvariant::new(problem, alpha)?;
    let shrink = match (names.contains(&"shrinkage_bayes"), prior) {
        (true, Some(prior)) => Some(ShrinkageBayes::new(problem, prior, alpha)?),
        _ => None,
    };
    let run = |builder: &(dyn Fn(&CanonicalObservation, u64) -> alphapred::Result<PredictiveDensity> + Sync)| {
        risk_alpha_mc(
            &builder,
            problem,
            params,
            alpha,
            config.reps_outer,
            config.n_mc_inner,
            seed,
        )
    };
    let baseline = run(&|o, _| best.density(o))?;
    let minimax = baseline.estimate.mean;
    for &name in names {
        let result = match name {
            "best_invariant" => baseline.clone(),
            "shrinkage_bayes" => {
                let sb = shrink.as_ref().expect("prior resolved");
                run(&|o, r| sb.density(o, n_is, seed, r))?
            }
            _ => run(&|o, _| plugin_density(&procs.estimate(name, o)?, problem))?,
        };
        let flag = dominates(&baseline.losses, &result.losses)?;
        rows.push(row(name, result.estimate, minimax, flag));
    }
    Ok(rows)
}

/// All risk rows, in grid order, then `α`, then procedure.
pub fn risk_rows(config: &ExperimentConfig) -> Result<Vec<RiskRow>, CliError> {
    let problem = config.problem()?;
    let points = config.grid_points(&problem)?;
    let alphas = config.alphas();
    let selected: Vec<&'static str> = match &config.procedures {
        Some(list) => PROCEDURES
            .iter()
            .copied()
            .filter(|p| list.iter().any(|s| s == p))
            .collect(),
        None => PROCEDURES.to_vec(),
    };
    let needs_prior = selected
        .iter()
        .any(|p| matches!(*p, "bayes_plugin" | "shrinkage_bayes"));
    let prior = if needs_prior && !points.is_empty() {
        Some(config.prior(&problem)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (i, point) in points.iter().enumerate() {
        let seed = derive_seed(config.seed, i as u64);
        for &alpha in &alphas {
            let names: Vec<&'static str> = selected
                .iter()
                .copied()
                .filter(|n| applicable(n, &problem, alpha))
                .collect();
            rows.extend(rows_at(config, &problem, prior.as_ref(), &names, point, alpha, seed)?);
        }
    }
    Ok(rows)
}

pub fn risk_csv(rows: &[RiskRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RISK_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.record()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn risk_compare(config: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let rows = risk_rows(config)?;
    write(out, "risk.csv", &risk_csv(&rows)?)?;
    Ok(format!("{} risk rows written\n", rows.len()))
}

fn density_for(
    config: &ExperimentConfig,
    problem: &CanonicalProblem,
    procedure: &str,
    alpha: Alpha,
    obs: &CanonicalObservation,
) -> Result<PredictiveDensity, CliError> {
    let prior = || config.prior(problem);
    let plugin = PluginProcedures { problem, prior: None };
    Ok(match (procedure, alpha.is_one()) {
        ("best_invariant", false) => BestInvariant::new(problem, alpha)?.density(obs)?,
        ("best_invariant", true) => plugin_density(&umvu_estimators(problem, obs)?, problem)?,
        ("shrinkage_bayes", false) => {
            ShrinkageBayes::new(problem, &prior()?, alpha)?.density(obs, config.n_is, config.seed, 0)?
        }
        ("shrinkage_bayes", true) | ("bayes_plugin", _) => {
            plugin_density(&plugin_bayes_estimators(problem, &prior()?, obs)?, problem)?
        }
        (name @ ("umvu" | "stein_st" | "stein_st_star"), _) => plugin_density(&plugin.estimate(name, obs)?, problem)?,
        (other, _) => return Err(CliError::Usage(format!("unknown density procedure {other:?}"))),
    })
}

pub fn density_eval(config: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let dc = config
        .density
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no density section".into()))?;
    let problem = config.problem()?;
    let alpha = Alpha::new(dc.alpha).map_err(|e| CliError::Usage(e.to_string()))?;
    let obs = config.observation(&dc.observation)?;
    problem
        .check_observation(&obs)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let points = config.points(&dc.points, problem.m)?;
    let density = density_for(config, &problem, &dc.procedure, alpha, &obs)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=problem.m).map(|i| format!("ytilde_{i}")).collect();
    header.extend(["log_density_unnormalized", "log_norm_const", "log_density"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for y in &points {
        let mut record: Vec<String> = y.iter().map(|&v| format_f64(v)).collect();
        record.push(format_f64(density.log_unnormalized(y)));
        record.push(format_f64(density.log_norm_const));
        record.push(format_f64(density.log_density(y)));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    write(
        out,
        "density.csv",
        &String::from_utf8(bytes).expect("csv output is utf-8"),
    )?;
    Ok(format!(
        "{} points evaluated; normalization: {:?}\n",
        points.len(),
        density.normalization
    ))
}
