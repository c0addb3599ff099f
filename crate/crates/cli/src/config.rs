//! Experiment configuration: one JSON document, one master seed.
//!
//! Paths inside a config are resolved relative to the directory that holds
//! the config file.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use alphapred::bounds::minimax_default;
use alphapred::canonical::{CanonicalObservation, CanonicalParams, CanonicalProblem};
use alphapred::io::{
    parse_matrix_csv, parse_observation_json, parse_points_csv, parse_problem_json, parse_regression_json,
};
use alphapred::predictive::{Alpha, PriorSpec};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 20_240_917;

fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_reps() -> usize {
    20_000
}
fn default_reps_outer() -> usize {
    2000
}
fn default_n_mc_inner() -> usize {
    2000
}
fn default_n_is() -> usize {
    8192
}
fn default_alphas() -> Vec<f64> {
    vec![1.0]
}
fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub design: Option<DesignSpec>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Procedures to compare; all applicable ones when absent.
    #[serde(default)]
    pub procedures: Option<Vec<String>>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_reps_outer")]
    pub reps_outer: usize,
    #[serde(default = "default_n_mc_inner")]
    pub n_mc_inner: usize,
    /// Importance samples per normalization of a shrinkage density.
    #[serde(default = "default_n_is")]
    pub n_is: usize,
    #[serde(default)]
    pub identities: IdentityConfig,
    #[serde(default)]
    pub bounds: Option<BoundsInput>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// Replicated design `X = 1_N ⊗ X̃` with `n = mN`.
    As1 {
        m: usize,
        k: usize,
        n_rep: usize,
        #[serde(default, rename = "Xtilde")]
        xtilde: Option<Vec<Vec<f64>>>,
    },
    Explicit {
        #[serde(rename = "X")]
        x: Vec<Vec<f64>>,
        #[serde(rename = "Xtilde")]
        xtilde: Vec<Vec<f64>>,
    },
    /// Two CSV files.
    Files { x: PathBuf, xtilde: PathBuf },
    /// A regression JSON document with `X`, `Xtilde` and optional `y`.
    Regression(PathBuf),
    /// A canonical problem JSON as written by `canonicalize`.
    Problem(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NuChoice {
    Value(f64),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Diagonal of `C0`; ones when absent.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    /// `"minimax"` (the default) picks `ν_max` after rescaling `C0`.
    #[serde(default)]
    pub nu: Option<NuChoice>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma_prior: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            c: None,
            nu: None,
            a: None,
            gamma_prior: default_gamma(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Directions of `θ`, normalized before use; `e₁` when absent.
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub theta_norms: Vec<f64>,
    #[serde(default)]
    pub sigma2: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            directions: None,
            theta_norms: vec![0.0],
            sigma2: vec![1.0],
        }
    }
}

fn default_lemma() -> usize {
    200
}
fn default_beta() -> usize {
    50
}
fn default_chi_draws() -> usize {
    100_000
}
fn default_log_points() -> usize {
    10_000
}
fn default_chi_nu() -> f64 {
    1.0
}
fn default_chi_dof() -> usize {
    9
}
fn default_chi_l() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    #[serde(default = "default_lemma")]
    pub lemma_instances: usize,
    #[serde(default = "default_beta")]
    pub beta_instances: usize,
    #[serde(default = "default_chi_draws")]
    pub chi_square_draws: usize,
    #[serde(default = "default_log_points")]
    pub log_grid_points: usize,
    #[serde(default = "default_chi_nu")]
    pub chi_square_nu: f64,
    #[serde(default = "default_chi_dof")]
    pub chi_square_dof: usize,
    #[serde(default = "default_chi_l")]
    pub chi_square_l: usize,
    /// Overrides the relative tolerance of the lemma and beta checks.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            lemma_instances: default_lemma(),
            beta_instances: default_beta(),
            chi_square_draws: default_chi_draws(),
            log_grid_points: default_log_points(),
            chi_square_nu: default_chi_nu(),
            chi_square_dof: default_chi_dof(),
            chi_square_l: default_chi_l(),
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsInput {
    pub d: Vec<f64>,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ObservationSource {
    Inline {
        #[serde(rename = "V")]
        v: Vec<f64>,
        #[serde(rename = "V_star", default)]
        v_star: Vec<f64>,
        #[serde(rename = "S")]
        s: f64,
    },
    Path(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PointsSource {
    Inline(Vec<Vec<f64>>),
    Path(PathBuf),
}

fn default_density_procedure() -> String {
    "shrinkage_bayes".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub observation: ObservationSource,
    pub points: PointsSource,
    pub alpha: f64,
    #[serde(default = "default_density_procedure")]
    pub procedure: String,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(usage(format!("{what} is empty")));
    }
    alphapred::linalg::from_rows(rows).map_err(|e| usage(format!("{what}: {e}")))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

/// Columns of the DCT-II basis: orthogonal, so `X̃` has full column rank.
pub fn default_xtilde(m: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, k, |i, j| (PI * (i as f64 + 0.5) * j as f64 / m as f64).cos())
}

/// Matrices before canonicalization, or a problem read from disk.
pub enum Design {
    Matrices { x: DMatrix<f64>, xtilde: DMatrix<f64> },
    Replicated { xtilde: DMatrix<f64>, n_rep: usize },
    Canonical(Box<CanonicalProblem>),
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let mut config = Self::from_json(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        for &a in &self.alphas {
            Alpha::new(a).map_err(|e| usage(format!("alphas: {e}")))?;
        }
        if self.grid.theta_norms.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(usage("theta_norms must be finite and nonnegative"));
        }
        if self.grid.sigma2.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(usage("sigma2 values must be finite and positive"));
        }
        if self.prior.a.is_some() && self.prior.nu.is_some() {
            return Err(usage("give either prior.a or prior.nu, not both"));
        }
        if let Some(NuChoice::Named(name)) = &self.prior.nu {
            if name != "minimax" {
                return Err(usage(format!("prior.nu must be a number or \"minimax\", got {name:?}")));
            }
        }
        if let Some(DesignSpec::As1 { m, k, n_rep, .. }) = &self.design {
            if !(*m >= *k && *k >= 3) || *n_rep == 0 {
                return Err(usage(format!(
                    "AS1 needs m >= k >= 3 and N >= 1, got m = {m}, k = {k}, N = {n_rep}"
                )));
            }
        }
        if let Some(names) = &self.procedures {
            for name in names {
                if !crate::commands::PROCEDURES.contains(&name.as_str()) {
                    return Err(usage(format!("unknown procedure {name:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn design(&self) -> Result<Design, CliError> {
        let spec = self.design.as_ref().ok_or_else(|| usage("config has no design"))?;
        Ok(match spec {
            DesignSpec::As1 { m, k, n_rep, xtilde } => {
                let xt = match xtilde {
                    Some(rows) => rows_to_matrix(rows, "Xtilde")?,
                    None => default_xtilde(*m, *k),
                };
                if xt.shape() != (*m, *k) {
                    return Err(usage(format!("AS1 Xtilde must be {m}x{k}")));
                }
                Design::Replicated {
                    xtilde: xt,
                    n_rep: *n_rep,
                }
            }
            DesignSpec::Explicit { x, xtilde } => Design::Matrices {
                x: rows_to_matrix(x, "X")?,
                xtilde: rows_to_matrix(xtilde, "Xtilde")?,
            },
            DesignSpec::Files { x, xtilde } => {
                let parse = |p: &PathBuf| {
                    parse_matrix_csv(&read(&self.resolve(p))?).map_err(|e| usage(format!("{}: {e}", p.display())))
                };
                Design::Matrices {
                    x: parse(x)?,
                    xtilde: parse(xtilde)?,
                }
            }
            DesignSpec::Regression(path) => {
                let r = parse_regression_json(&read(&self.resolve(path))?).map_err(|e| usage(e.to_string()))?;
                Design::Matrices {
                    x: r.x,
                    xtilde: r.xtilde,
                }
            }
            DesignSpec::Problem(path) => {
                let p = parse_problem_json(&read(&self.resolve(path))?).map_err(CliError::Canonical)?;
                Design::Canonical(Box::new(p))
            }
        })
    }

    /// Canonical problem of the configured design.
    pub fn problem(&self) -> Result<CanonicalProblem, CliError> {
        match self.design()? {
            Design::Matrices { x, xtilde } => CanonicalProblem::from_design(&x, &xtilde).map_err(CliError::Canonical),
            Design::Replicated { xtilde, n_rep } => {
                CanonicalProblem::from_replicated(&xtilde, n_rep).map_err(CliError::Canonical)
            }
            Design::Canonical(p) => Ok(*p),
        }
    }

    fn c0(&self, l: usize) -> Result<DVector<f64>, CliError> {
        match &self.prior.c {
            None => Ok(DVector::from_element(l, 1.0)),
            Some(c) if c.len() == l => Ok(DVector::from_column_slice(c)),
            Some(c) => Err(usage(format!("prior.c has {} entries, problem has l = {l}", c.len()))),
        }
    }

    pub fn prior(&self, problem: &CanonicalProblem) -> Result<PriorSpec, CliError> {
        let c0 = self.c0(problem.l)?;
        let gamma = self.prior.gamma_prior;
        let prior = match (&self.prior.nu, self.prior.a) {
            (Some(NuChoice::Value(nu)), _) => PriorSpec::with_nu(c0, *nu, gamma, problem),
            (_, Some(a)) => PriorSpec::new(c0, a, gamma).and_then(|p| p.check_against(problem).map(|_| p)),
            _ => minimax_default(problem, Some(&c0)).and_then(|d| PriorSpec::new(d.prior.c, d.prior.a, gamma)),
        };
        prior.map_err(|e| usage(format!("prior: {e}")))
    }

    pub fn alphas(&self) -> Vec<Alpha> {
        self.alphas.iter().map(|&a| Alpha::new(a).expect("validated")).collect()
    }

    /// Parameter points in grid order: direction, then norm, then `σ²`.
    pub fn grid_points(&self, problem: &CanonicalProblem) -> Result<Vec<GridPoint>, CliError> {
        let l = problem.l;
        let directions = match &self.grid.directions {
            Some(ds) => ds
                .iter()
                .map(|d| {
                    let v = DVector::from_column_slice(d);
                    let norm = v.norm();
                    if d.len() != l || !(norm > 0.0) || !norm.is_finite() {
                        return Err(usage(format!("grid directions must be nonzero vectors of length {l}")));
                    }
                    Ok(v / norm)
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => {
                let mut e1 = DVector::zeros(l);
                e1[0] = 1.0;
                vec![e1]
            }
        };
        let mut points = Vec::new();
        for dir in &directions {
            for &norm in &self.grid.theta_norms {
                for &sigma2 in &self.grid.sigma2 {
                    let params = CanonicalParams::new(dir * norm, DVector::zeros(problem.k - l), 1.0 / sigma2)
                        .map_err(|e| usage(e.to_string()))?;
                    points.push(GridPoint {
                        theta_norm: norm,
                        sigma2,
                        params,
                    });
                }
            }
        }
        Ok(points)
    }

    pub fn observation(&self, source: &ObservationSource) -> Result<CanonicalObservation, CliError> {
        match source {
            ObservationSource::Inline { v, v_star, s } => {
                CanonicalObservation::new(DVector::from_column_slice(v), DVector::from_column_slice(v_star), *s)
            }
            ObservationSource::Path(p) => parse_observation_json(&read(&self.resolve(p))?),
        }
        .map_err(|e| usage(format!("observation: {e}")))
    }

    pub fn points(&self, source: &PointsSource, m: usize) -> Result<Vec<DVector<f64>>, CliError> {
        match source {
            PointsSource::Inline(rows) => rows
                .iter()
                .map(|r| {
                    if r.len() != m || r.iter().any(|x| !x.is_finite()) {
                        Err(usage(format!("every point needs {m} finite coordinates")))
                    } else {
                        Ok(DVector::from_column_slice(r))
                    }
                })
                .collect(),
            PointsSource::Path(p) => {
                parse_points_csv(&read(&self.resolve(p))?, Some(m)).map_err(|e| usage(format!("points: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub theta_norm: f64,
    pub sigma2: f64,
    pub params: CanonicalParams,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(r#"{"design": {"as1": {"m": 3, "k": 3, "n_rep": 4}}}"#).unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.reps_outer, 2000);
        let p = c.problem().unwrap();
        assert_eq!((p.n, p.k, p.m), (12, 3, 3));
        assert_eq!(c.grid_points(&p).unwrap().len(), 1);
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        for text in [
            r#"{"alphas": [2.0]}"#,
            r#"{"design": {"as1": {"m": 2, "k": 3, "n_rep": 4}}}"#,
            r#"{"prior": {"nu": "large"}}"#,
            r#"{"prior": {"nu": 0.1, "a": 1.0}}"#,
            r#"{"procedures": ["oracle"]}"#,
            r#"{"unknown": 1}"#,
            r#"{"grid": {"theta_norms": [-1]}}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(CliError::Usage(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn default_xtilde_has_orthogonal_columns() {
        let x = default_xtilde(5, 3);
        let g = x.transpose() * &x;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(g[(i, j)].abs() < 1e-12);
                }
            }
        }
    }
}
