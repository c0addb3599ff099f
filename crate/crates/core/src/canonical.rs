//! Reduction of the regression prediction problem to canonical form.
//!
//! Observation `y ~ N_n(Xβ, σ²I)` and future `ỹ ~ N_m(X̃β, σ²I)` reduce to
//! independent statistics
//!
//! ```text
//! V ~ N_l(θ, η⁻¹D),   V* ~ N_{k−l}(μ, η⁻¹I),   ηS ~ χ²_{n−k},   ỹ ~ N_m(Qθ, η⁻¹I)
//! ```
//!
//! with `l = min(k, m)`, `D` diagonal nonincreasing and `Q'Q = I_l`.
//!
//! * Case I (`m ≥ k`): `M` simultaneously diagonalizes `X'X` and `X̃'X̃`,
//!   i.e. `M'(X'X)⁻¹M = D` and `MM' = X̃'X̃`; then `V = M'β̂`, `Q = X̃M'⁻¹`.
//! * Case II (`m < k`): `P` diagonalizes `X̃(X'X)⁻¹X̃'`, the rows of `X̃*`
//!   complete `X̃` to a nonsingular matrix with `X̃(X'X)⁻¹X̃*' = 0`, and `P*`
//!   whitens `X̃*(X'X)⁻¹X̃*'`; then `V = P'X̃β̂`, `V* = P*'X̃*β̂`, `Q = P`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor, SymmetricEigen};
use crate::rng::{stream_rng, Domain};

/// Condition number of `X'X` above which a warning is attached.
pub const CONDITION_WARNING: f64 = 1e12;

/// `‖Q'Q − I‖_max` tolerance.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Tolerance for the diagonalization identities.
pub const DIAGONALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub xtilde: DMatrix<f64>,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, xtilde: DMatrix<f64>) -> Result<Self> {
        check_design_shapes(&x, &xtilde)?;
        if y.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "y has {} entries but X has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("y"));
        }
        Ok(RegressionData { x, y, xtilde })
    }
}

fn check_design_shapes(x: &DMatrix<f64>, xtilde: &DMatrix<f64>) -> Result<()> {
    let (n, k) = x.shape();
    if k == 0 || n <= k {
        return Err(Error::Dimension(format!("need n > k >= 1, got n = {n}, k = {k}")));
    }
    if xtilde.ncols() != k || xtilde.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "Xtilde must be m x {k} with m >= 1, got {}x{}",
            xtilde.nrows(),
            xtilde.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("X"));
    }
    if xtilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Xtilde"));
    }
    Ok(())
}

/// Replicated design `X = 1_N ⊗ X̃`: `X̃` stacked `n_rep` times.
pub fn replicated_design(xtilde: &DMatrix<f64>, n_rep: usize) -> DMatrix<f64> {
    let (m, k) = xtilde.shape();
    DMatrix::from_fn(m * n_rep, k, |i, j| xtilde[(i % m, j)])
}

/// Least squares estimate and residual sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub beta_hat: DVector<f64>,
    pub s: f64,
}

fn check_full_column_rank(a: &DMatrix<f64>, what: &'static str) -> Result<Vec<f64>> {
    let sv = linalg::singular_values(a);
    let largest = sv[0];
    let smallest = *sv.last().unwrap();
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * largest;
    if !(largest > 0.0) || smallest <= tol {
        return Err(Error::RankDeficient {
            what,
            smallest,
            largest,
        });
    }
    Ok(sv)
}

pub fn sufficient_statistics(data: &RegressionData) -> Result<SufficientStats> {
    check_full_column_rank(&data.x, "X")?;
    let xtx = data.x.transpose() * &data.x;
    let chol = nalgebra::Cholesky::new(xtx).ok_or(Error::NotPositiveDefinite("X'X"))?;
    let beta_hat = chol.solve(&(data.x.transpose() * &data.y));
    let residual = &data.y - &data.x * &beta_hat;
    let mut s = residual.norm_squared();
    // a residual at rounding level means y lies in the column space
    let rounding = data.y.len() as f64 * f64::EPSILON * data.y.norm();
    if s <= rounding * rounding {
        s = 0.0;
    }
    Ok(SufficientStats { beta_hat, s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseTag {
    /// `m ≥ k`
    I,
    /// `m < k`
    II,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    CaseI {
        m: DMatrix<f64>,
    },
    CaseII {
        p: DMatrix<f64>,
        p_star: DMatrix<f64>,
        xtilde_star: DMatrix<f64>,
    },
}

/// Reduced geometry of a prediction problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalProblem {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub l: usize,
    /// Diagonal of `D`, nonincreasing.
    pub d: DVector<f64>,
    /// `m × l`, orthonormal columns.
    pub q: DMatrix<f64>,
    /// `None` when the problem was specified directly in canonical
    /// coordinates.
    pub transform: Option<Transform>,
    pub xtilde: Option<DMatrix<f64>>,
    pub xtx_inv: Option<DMatrix<f64>>,
    pub condition_number: f64,
    pub warnings: Vec<String>,
}

impl CanonicalProblem {
    /// Canonical form of the design pair `(X, X̃)`.
    pub fn from_design(x: &DMatrix<f64>, xtilde: &DMatrix<f64>) -> Result<Self> {
        check_design_shapes(x, xtilde)?;
        let (n, k) = x.shape();
        let m = xtilde.nrows();
        let sv = check_full_column_rank(x, "X")?;
        let condition_number = (sv[0] / sv[k - 1]).powi(2);
        let mut warnings = Vec::new();
        if condition_number > CONDITION_WARNING {
            warnings.push(format!(
                "condition number of X'X is {condition_number:.3e} (above {CONDITION_WARNING:e})"
            ));
        }
        let xtx = x.transpose() * x;
        let xtx_inv = SpdFactor::new(&xtx, "X'X")?.inverse();
        let xtx_inv = symmetrize(&xtx_inv);

        if m >= k {
            check_full_column_rank(xtilde, "Xtilde")?;
            let (root, polar) = linalg::polar_decomposition(xtilde, "Xtilde")?;
            let g = symmetrize(&(&root * &xtx_inv * &root));
            let eig = SymmetricEigen::new(&g)?;
            let d = DVector::from_vec(eig.values.clone());
            let m_mat = &root * &eig.vectors;
            let q = polar * &eig.vectors;
            let problem = CanonicalProblem {
                n,
                k,
                m,
                l: k,
                d,
                q,
                transform: Some(Transform::CaseI { m: m_mat }),
                xtilde: Some(xtilde.clone()),
                xtx_inv: Some(xtx_inv),
                condition_number,
                warnings,
            };
            problem.ensure_positive_d()?;
            Ok(problem)
        } else {
            check_full_column_rank(&xtilde.transpose(), "Xtilde")?;
            let cov = symmetrize(&(xtilde * &xtx_inv * xtilde.transpose()));
            let eig = SymmetricEigen::new(&cov)?;
            let d = DVector::from_vec(eig.values.clone());
            let p = eig.vectors.clone();
            // rows of X̃* span the null space of X̃(X'X)⁻¹
            let a_t = (xtilde * &xtx_inv).transpose();
            let xtilde_star = linalg::orthogonal_complement(&a_t)?.transpose();
            let cov_star = symmetrize(&(&xtilde_star * &xtx_inv * xtilde_star.transpose()));
            let (_, p_star) = linalg::spd_sqrt_pair(&cov_star, "Xtilde* (X'X)^-1 Xtilde*'")?;
            let problem = CanonicalProblem {
                n,
                k,
                m,
                l: m,
                d,
                q: p.clone(),
                transform: Some(Transform::CaseII { p, p_star, xtilde_star }),
                xtilde: Some(xtilde.clone()),
                xtx_inv: Some(xtx_inv),
                condition_number,
                warnings,
            };
            problem.ensure_positive_d()?;
            Ok(problem)
        }
    }

    /// Canonical form of the replicated design `X = 1_N ⊗ X̃` with `m ≥ k`.
    /// Here `X'X = N X̃'X̃`, so `G = I/N` and `D = N⁻¹I_k` holds exactly;
    /// the eigenbasis is taken to be the identity.
    pub fn from_replicated(xtilde: &DMatrix<f64>, n_rep: usize) -> Result<Self> {
        let (m, k) = xtilde.shape();
        if k == 0 || m < k || n_rep == 0 {
            return Err(Error::Dimension(format!(
                "replicated design needs m >= k >= 1 and N >= 1, got m = {m}, k = {k}, N = {n_rep}"
            )));
        }
        let x = replicated_design(xtilde, n_rep);
        check_design_shapes(&x, xtilde)?;
        let n = x.nrows();
        let sv = check_full_column_rank(&x, "X")?;
        let condition_number = (sv[0] / sv[k - 1]).powi(2);
        let mut warnings = Vec::new();
        if condition_number > CONDITION_WARNING {
            warnings.push(format!(
                "condition number of X'X is {condition_number:.3e} (above {CONDITION_WARNING:e})"
            ));
        }
        let xtx = x.transpose() * &x;
        let xtx_inv = symmetrize(&SpdFactor::new(&xtx, "X'X")?.inverse());
        let (root, polar) = linalg::polar_decomposition(xtilde, "Xtilde")?;
        let problem = CanonicalProblem {
            n,
            k,
            m,
            l: k,
            d: DVector::from_element(k, 1.0 / n_rep as f64),
            q: polar,
            transform: Some(Transform::CaseI { m: root }),
            xtilde: Some(xtilde.clone()),
            xtx_inv: Some(xtx_inv),
            condition_number,
            warnings,
        };
        problem.validate_geometry()?;
        Ok(problem)
    }

    /// A problem given directly in canonical coordinates, with no design
    /// behind it. `d` must be positive and nonincreasing, `q` must be
    /// `m × l` with orthonormal columns.
    pub fn from_canonical(n: usize, k: usize, d: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        let (m, l) = q.shape();
        if k == 0 || n <= k {
            return Err(Error::Dimension(format!("need n > k >= 1, got n = {n}, k = {k}")));
        }
        if l != k.min(m) || d.len() != l {
            return Err(Error::Dimension(format!(
                "with k = {k}, m = {m}: expected l = {}, got Q with {l} columns and {} d values",
                k.min(m),
                d.len()
            )));
        }
        let problem = CanonicalProblem {
            n,
            k,
            m,
            l,
            d,
            q,
            transform: None,
            xtilde: None,
            xtx_inv: None,
            condition_number: f64::NAN,
            warnings: Vec::new(),
        };
        problem.validate_geometry()?;
        Ok(problem)
    }

    fn ensure_positive_d(&self) -> Result<()> {
        if self.d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::NotPositiveDefinite("D"));
        }
        Ok(())
    }

    /// Shape, finiteness, positivity, ordering and orthonormality checks
    /// that any problem (including one loaded from a file) must pass.
    pub fn validate_geometry(&self) -> Result<()> {
        if self.l != self.k.min(self.m) || self.d.len() != self.l || self.q.shape() != (self.m, self.l) {
            return Err(Error::Dimension("inconsistent canonical dimensions".into()));
        }
        if self.k == 0 || self.n <= self.k {
            return Err(Error::Dimension(format!(
                "need n > k >= 1, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if self.d.iter().chain(self.q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("canonical problem"));
        }
        self.ensure_positive_d()?;
        if self.d.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Unsorted("D"));
        }
        let qtq = self.q.transpose() * &self.q;
        if linalg::max_abs(&(qtq - DMatrix::identity(self.l, self.l))) >= ORTHONORMALITY_TOL {
            return Err(Error::InvalidParameter("Q does not have orthonormal columns".into()));
        }
        Ok(())
    }

    pub fn case(&self) -> CaseTag {
        if self.m >= self.k {
            CaseTag::I
        } else {
            CaseTag::II
        }
    }

    /// Residual degrees of freedom `n − k`.
    pub fn dof(&self) -> usize {
        self.n - self.k
    }

    pub fn trace_d(&self) -> f64 {
        self.d.sum()
    }

    /// `k × k` matrix `T` with `(V; V*) = T β̂`.
    pub fn coefficient_map(&self) -> Result<DMatrix<f64>> {
        match (&self.transform, &self.xtilde) {
            (Some(Transform::CaseI { m }), _) => Ok(m.transpose()),
            (Some(Transform::CaseII { p, p_star, xtilde_star }), Some(xtilde)) => {
                let top = p.transpose() * xtilde;
                let bottom = p_star.transpose() * xtilde_star;
                let mut t = DMatrix::zeros(self.k, self.k);
                t.rows_mut(0, self.m).copy_from(&top);
                t.rows_mut(self.m, self.k - self.m).copy_from(&bottom);
                Ok(t)
            }
            _ => Err(Error::Unsupported(
                "problem was given in canonical coordinates; no coefficient transform",
            )),
        }
    }

    fn split(&self, full: DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let v = full.rows(0, self.l).clone_owned();
        let v_star = full.rows(self.l, self.k - self.l).clone_owned();
        (v, v_star)
    }

    pub fn to_canonical(&self, stats: &SufficientStats) -> Result<CanonicalObservation> {
        if stats.beta_hat.len() != self.k {
            return Err(Error::Dimension(format!(
                "beta_hat has {} entries, problem has k = {}",
                stats.beta_hat.len(),
                self.k
            )));
        }
        let (v, v_star) = self.split(self.coefficient_map()? * &stats.beta_hat);
        CanonicalObservation::new(v, v_star, stats.s)
    }

    pub fn params_to_canonical(&self, beta: &DVector<f64>, sigma2: f64) -> Result<CanonicalParams> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        if beta.len() != self.k {
            return Err(Error::Dimension(format!(
                "beta has {} entries, problem has k = {}",
                beta.len(),
                self.k
            )));
        }
        let (theta, mu) = self.split(self.coefficient_map()? * beta);
        CanonicalParams::new(theta, mu, 1.0 / sigma2)
    }

    /// One draw of `(V, V*, S)` under `params`.
    pub fn simulate_observation<R: Rng + ?Sized>(
        &self,
        params: &CanonicalParams,
        rng: &mut R,
    ) -> Result<CanonicalObservation> {
        self.check_params(params)?;
        let sd = 1.0 / params.eta.sqrt();
        let v = DVector::from_iterator(
            self.l,
            params.theta.iter().zip(self.d.iter()).map(|(t, d)| {
                let z: f64 = StandardNormal.sample(rng);
                t + sd * d.sqrt() * z
            }),
        );
        let v_star = DVector::from_iterator(
            self.k - self.l,
            params.mu.iter().map(|mu| {
                let z: f64 = StandardNormal.sample(rng);
                mu + sd * z
            }),
        );
        let chi2 = Gamma::new(0.5 * self.dof() as f64, 2.0)
            .expect("positive shape and scale")
            .sample(rng);
        CanonicalObservation::new(v, v_star, chi2 / params.eta)
    }

    /// Draw for replication `index` of the stream keyed by `seed`.
    pub fn simulate_seeded(&self, params: &CanonicalParams, seed: u64, index: u64) -> Result<CanonicalObservation> {
        let mut rng = stream_rng(seed, Domain::Observation, index);
        self.simulate_observation(params, &mut rng)
    }

    pub fn check_params(&self, params: &CanonicalParams) -> Result<()> {
        if params.theta.len() != self.l || params.mu.len() != self.k - self.l {
            return Err(Error::Dimension(format!(
                "parameters have dim(theta) = {}, dim(mu) = {}; problem needs {} and {}",
                params.theta.len(),
                params.mu.len(),
                self.l,
                self.k - self.l
            )));
        }
        Ok(())
    }

    pub fn check_observation(&self, obs: &CanonicalObservation) -> Result<()> {
        if obs.v.len() != self.l || obs.v_star.len() != self.k - self.l {
            return Err(Error::Dimension(format!(
                "observation has dim(V) = {}, dim(V*) = {}; problem needs {} and {}",
                obs.v.len(),
                obs.v_star.len(),
                self.l,
                self.k - self.l
            )));
        }
        Ok(())
    }

    /// Residuals of every defining identity of the canonical form.
    pub fn check_invariants(&self) -> InvariantReport {
        let mut checks = Vec::new();
        let qtq = self.q.transpose() * &self.q;
        checks.push(InvariantCheck::new(
            "Q'Q = I",
            linalg::max_abs(&(qtq - DMatrix::identity(self.l, self.l))),
            ORTHONORMALITY_TOL,
        ));
        let unsorted = self
            .d
            .as_slice()
            .windows(2)
            .map(|w| (w[1] - w[0]).max(0.0))
            .fold(0.0, f64::max);
        checks.push(InvariantCheck::new("D nonincreasing", unsorted, 0.0));
        let min_d = self.d.min();
        checks.push(InvariantCheck {
            name: "D positive".into(),
            residual: min_d,
            tolerance: 0.0,
            pass: min_d > 0.0,
        });

        let (Some(xtilde), Some(a)) = (&self.xtilde, &self.xtx_inv) else {
            return InvariantReport { checks };
        };
        let diag_d = DMatrix::from_diagonal(&self.d);
        match &self.transform {
            Some(Transform::CaseI { m }) => {
                let gram = xtilde.transpose() * xtilde;
                let recon = (m * m.transpose() - &gram).norm() / gram.norm();
                checks.push(InvariantCheck::new(
                    "MM' = Xtilde'Xtilde (relative)",
                    recon,
                    DIAGONALIZATION_TOL,
                ));
                let mam = m.transpose() * a * m;
                let scale = linalg::max_abs(&mam);
                checks.push(InvariantCheck::new(
                    "M'(X'X)^-1 M = D (relative)",
                    linalg::max_abs(&(mam - &diag_d)) / scale,
                    DIAGONALIZATION_TOL,
                ));
                let via_q = &self.q * m.transpose();
                checks.push(InvariantCheck::new(
                    "Q M' = Xtilde (relative)",
                    linalg::max_abs(&(via_q - xtilde)) / linalg::max_abs(xtilde),
                    DIAGONALIZATION_TOL,
                ));
            }
            Some(Transform::CaseII { p, p_star, xtilde_star }) => {
                let cov = p.transpose() * xtilde * a * xtilde.transpose() * p;
                let scale = linalg::max_abs(&cov);
                checks.push(InvariantCheck::new(
                    "P'Xtilde(X'X)^-1 Xtilde'P = D (relative)",
                    linalg::max_abs(&(cov - &diag_d)) / scale,
                    DIAGONALIZATION_TOL,
                ));
                checks.push(InvariantCheck::new(
                    "Xtilde (X'X)^-1 Xtilde*' = 0",
                    linalg::max_abs(&(xtilde * a * xtilde_star.transpose())),
                    DIAGONALIZATION_TOL,
                ));
                let white = p_star.transpose() * xtilde_star * a * xtilde_star.transpose() * p_star;
                let r = self.k - self.m;
                checks.push(InvariantCheck::new(
                    "P*'Xtilde*(X'X)^-1 Xtilde*'P* = I",
                    linalg::max_abs(&(white - DMatrix::identity(r, r))),
                    DIAGONALIZATION_TOL,
                ));
                let mut stacked = DMatrix::zeros(self.k, self.k);
                stacked.rows_mut(0, self.m).copy_from(xtilde);
                stacked.rows_mut(self.m, r).copy_from(xtilde_star);
                let sv = linalg::singular_values(&stacked);
                let inv_cond = sv[self.k - 1] / sv[0];
                checks.push(InvariantCheck {
                    name: "(Xtilde; Xtilde*) nonsingular (inverse condition)".into(),
                    residual: inv_cond,
                    tolerance: 1e-12,
                    pass: inv_cond > 1e-12,
                });
            }
            None => {}
        }
        InvariantReport { checks }
    }
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Sufficient statistics in canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalObservation {
    pub v: DVector<f64>,
    pub v_star: DVector<f64>,
    pub s: f64,
}

impl CanonicalObservation {
    pub fn new(v: DVector<f64>, v_star: DVector<f64>, s: f64) -> Result<Self> {
        if v.iter().chain(v_star.iter()).any(|x| !x.is_finite()) || !s.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        if s < 0.0 {
            return Err(Error::InvalidParameter(format!("S must be nonnegative, got {s}")));
        }
        Ok(CanonicalObservation { v, v_star, s })
    }

    pub(crate) fn require_positive_s(&self) -> Result<()> {
        if self.s > 0.0 {
            Ok(())
        } else {
            Err(Error::DegenerateObservation)
        }
    }
}

/// Parameters `(θ, μ, η)` with `η = 1/σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalParams {
    pub theta: DVector<f64>,
    pub mu: DVector<f64>,
    pub eta: f64,
}

impl CanonicalParams {
    pub fn new(theta: DVector<f64>, mu: DVector<f64>, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        if theta.iter().chain(mu.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(CanonicalParams { theta, mu, eta })
    }

    pub fn sigma2(&self) -> f64 {
        1.0 / self.eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl InvariantCheck {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        InvariantCheck {
            name: name.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}
