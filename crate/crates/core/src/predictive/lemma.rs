//! Quadratic-form identity used to integrate out `θ`, and the two
//! instances `A` and `B` that enter the predictive density.

use nalgebra::{DMatrix, DVector};

use super::{shrinkage_components, Alpha, PriorSpec};
use crate::canonical::CanonicalProblem;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, SpdFactor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaSides {
    pub lhs: f64,
    pub rhs: f64,
}

/// Both sides of
///
/// ```text
/// G = ‖ỹ‖² + v'D*⁻¹v − (Q'ỹ + D*⁻¹v)'(I + D*⁻¹)⁻¹F(Q'ỹ + D*⁻¹v)
///   = {ỹ − QF H⁻¹v}'{I + QFD*H⁻¹Q'}⁻¹{ỹ − QF H⁻¹v} + v'(D* + I)(I − F)D*⁻¹H⁻¹v
/// ```
///
/// with `H = I + D*(I − F)`, for diagonal `F` and `D*` given as vectors.
pub fn lemma_identity_residual(
    f: &DVector<f64>,
    d_star: &DVector<f64>,
    q: &DMatrix<f64>,
    ytilde: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<LemmaSides> {
    let (m, l) = q.shape();
    if f.len() != l || d_star.len() != l || v.len() != l || ytilde.len() != m {
        return Err(Error::Dimension("lemma arguments have inconsistent sizes".into()));
    }
    if max_abs(&(q.transpose() * q - DMatrix::identity(l, l))) > 1e-10 {
        return Err(Error::InvalidParameter("Q must have orthonormal columns".into()));
    }
    if d_star.iter().any(|&d| d == 0.0) {
        return Err(Error::Singular("D*"));
    }
    let h: Vec<f64> = (0..l).map(|i| 1.0 + d_star[i] * (1.0 - f[i])).collect();
    if h.iter().any(|&x| x.abs() <= f64::EPSILON) {
        return Err(Error::Singular("I + D*(I - F)"));
    }
    if d_star.iter().any(|&d| (1.0 + 1.0 / d).abs() <= f64::EPSILON) {
        return Err(Error::Singular("I + D*^-1"));
    }

    let u = q.transpose() * ytilde + v.component_div(d_star);
    let cross: f64 = (0..l).map(|i| u[i] * u[i] * f[i] / (1.0 + 1.0 / d_star[i])).sum();
    let v_quad: f64 = (0..l).map(|i| v[i] * v[i] / d_star[i]).sum();
    let lhs = ytilde.norm_squared() + v_quad - cross;

    let shift = q * DVector::from_iterator(l, (0..l).map(|i| f[i] * v[i] / h[i]));
    let r = ytilde - shift;
    let inner = DVector::from_iterator(l, (0..l).map(|i| f[i] * d_star[i] / h[i]));
    let mat = DMatrix::identity(m, m) + q * DMatrix::from_diagonal(&inner) * q.transpose();
    let solved = mat.lu().solve(&r).ok_or(Error::Singular("I + Q F D* H^-1 Q'"))?;
    let residual: f64 = (0..l)
        .map(|i| v[i] * v[i] * (d_star[i] + 1.0) * (1.0 - f[i]) / (d_star[i] * h[i]))
        .sum();
    Ok(LemmaSides {
        lhs,
        rhs: r.dot(&solved) + residual,
    })
}

/// `A` and `B` evaluated from their defining expressions (`direct`) and
/// from the closed forms through `Σ_U`, `Σ_B`, `θ̂_B` and `R` (`closed`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbForms {
    pub a_direct: f64,
    pub a_closed: f64,
    pub b_direct: f64,
    pub b_closed: f64,
}

pub fn ab_forms(
    problem: &CanonicalProblem,
    prior: &PriorSpec,
    alpha: Alpha,
    v: &DVector<f64>,
    ytilde: &DVector<f64>,
) -> Result<AbForms> {
    let sc = shrinkage_components(problem, prior, alpha, v)?;
    let l = problem.l;
    let d_star = &problem.d * (alpha.complement() / 2.0);
    let ones = DVector::from_element(l, 1.0);
    let f_b = DVector::from_iterator(l, prior.c.iter().map(|c| 1.0 - 1.0 / c));
    let a_direct = lemma_identity_residual(&ones, &d_star, &problem.q, ytilde, v)?.lhs;
    let b_direct = lemma_identity_residual(&f_b, &d_star, &problem.q, ytilde, v)?.lhs;
    let k = 2.0 / alpha.complement();
    let su = SpdFactor::new(&sc.sigma_u, "Sigma_U")?;
    let sb = SpdFactor::new(&sc.sigma_b, "Sigma_B")?;
    let a_closed = k * su.quad_form(&(ytilde - &problem.q * v));
    let b_closed = k * (sb.quad_form(&(ytilde - &problem.q * &sc.theta_hat_b)) + sc.r);
    Ok(AbForms {
        a_direct,
        a_closed,
        b_direct,
        b_closed,
    })
}
