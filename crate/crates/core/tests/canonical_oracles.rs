//! Canonical reduction checked against least squares by QR, simulation in
//! the original coordinates, and random designs.

use alphapred::canonical::{
    replicated_design, sufficient_statistics, CanonicalParams, CanonicalProblem, RegressionData, Transform,
};
use alphapred::io::{parse_problem_json, problem_to_json};
use alphapred::rng::{stream_rng, Domain};
use alphapred::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, Domain::Instances, 0);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

#[test]
fn least_squares_matches_qr() {
    for (n, k, seed) in [(8, 3, 1), (20, 5, 2), (6, 1, 3)] {
        let x = gaussian(n, k, seed);
        let y = gaussian(n, 1, seed + 100).column(0).into_owned();
        let data = RegressionData::new(x.clone(), y.clone(), DMatrix::identity(k, k)).unwrap();
        let stats = sufficient_statistics(&data).unwrap();
        let qr = x.clone().qr();
        let beta = qr.r().solve_upper_triangular(&(qr.q().transpose() * &y)).unwrap();
        let rss = (&y - &x * &beta).norm_squared();
        assert!((&stats.beta_hat - &beta).amax() < 1e-10 * (1.0 + beta.amax()));
        assert!((stats.s - rss).abs() < 1e-10 * rss);
    }
}

#[test]
fn exact_fit_has_zero_residual() {
    let x = gaussian(7, 2, 9);
    let y = &x * DVector::from_vec(vec![1.5, -0.25]);
    let data = RegressionData::new(x, y, DMatrix::identity(2, 2)).unwrap();
    assert_eq!(sufficient_statistics(&data).unwrap().s, 0.0);
}

#[test]
fn rank_deficient_design_is_rejected() {
    let mut x = gaussian(9, 3, 4);
    let col = x.column(0) * 2.0;
    x.set_column(2, &col);
    let err = CanonicalProblem::from_design(&x, &gaussian(3, 3, 5)).unwrap_err();
    assert!(matches!(err, Error::RankDeficient { what: "X", .. }), "{err}");
}

/// Draw `y` in the original coordinates and check the first two moments
/// of `(V, V*, S)` against the canonical model.
fn check_moments(x: &DMatrix<f64>, xtilde: &DMatrix<f64>, beta: &DVector<f64>, sigma2: f64, seed: u64) {
    let problem = CanonicalProblem::from_design(x, xtilde).unwrap();
    let params = problem.params_to_canonical(beta, sigma2).unwrap();
    let (n, k) = x.shape();
    let reps = 20_000;
    let mut rng = stream_rng(seed, Domain::Observation, 0);
    let mut sum_v = DVector::zeros(problem.l);
    let mut sum_vv = DVector::zeros(problem.l);
    let mut sum_vs = DVector::zeros(k - problem.l);
    let mut sum_s = 0.0;
    let mean_y = x * beta;
    for _ in 0..reps {
        let y = DVector::from_fn(n, |i, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mean_y[i] + sigma2.sqrt() * z
        });
        let data = RegressionData::new(x.clone(), y, xtilde.clone()).unwrap();
        let obs = problem.to_canonical(&sufficient_statistics(&data).unwrap()).unwrap();
        let dv = &obs.v - &params.theta;
        sum_v += &dv;
        sum_vv += dv.component_mul(&dv);
        sum_vs += &obs.v_star - &params.mu;
        sum_s += obs.s / sigma2;
    }
    let r = reps as f64;
    for i in 0..problem.l {
        let var = sigma2 * problem.d[i];
        assert!((sum_v[i] / r).abs() < 4.0 * (var / r).sqrt(), "mean of V_{i}");
        assert!(
            (sum_vv[i] / r - var).abs() < 4.0 * var * (2.0 / r).sqrt(),
            "variance of V_{i}"
        );
    }
    for i in 0..k - problem.l {
        assert!((sum_vs[i] / r).abs() < 4.0 * (sigma2 / r).sqrt(), "mean of V*_{i}");
    }
    let dof = (n - k) as f64;
    assert!((sum_s / r - dof).abs() < 4.0 * (2.0 * dof / r).sqrt(), "mean of S");
}

#[test]
fn canonical_moments_case_one() {
    let x = gaussian(10, 3, 11);
    let xtilde = gaussian(4, 3, 12);
    check_moments(&x, &xtilde, &DVector::from_vec(vec![1.0, -0.5, 2.0]), 0.7, 13);
}

#[test]
fn canonical_moments_case_two() {
    let x = gaussian(12, 3, 21);
    let xtilde = gaussian(1, 3, 22);
    check_moments(&x, &xtilde, &DVector::from_vec(vec![0.3, 1.0, -1.0]), 2.0, 23);
}

#[test]
fn future_mean_is_q_theta() {
    for (m, seed) in [(4, 31), (3, 32), (1, 33), (2, 34)] {
        let x = gaussian(10, 3, seed);
        let xtilde = gaussian(m, 3, seed + 50);
        let p = CanonicalProblem::from_design(&x, &xtilde).unwrap();
        let beta = DVector::from_vec(vec![0.4, -1.3, 0.8]);
        let params = p.params_to_canonical(&beta, 1.0).unwrap();
        let diff = (&p.q * &params.theta - &xtilde * &beta).amax();
        assert!(diff < 1e-10, "m = {m}: {diff:e}");
    }
}

#[test]
fn replicated_design_gives_exact_scaled_identity() {
    for (m, k, n_rep) in [(3, 3, 4), (5, 3, 7), (4, 4, 3)] {
        let xtilde = gaussian(m, k, (m * 10 + n_rep) as u64);
        let exact = CanonicalProblem::from_replicated(&xtilde, n_rep).unwrap();
        assert!(exact.d.iter().all(|&d| d == 1.0 / n_rep as f64));
        assert!(exact.check_invariants().all_pass());
        let general = CanonicalProblem::from_design(&replicated_design(&xtilde, n_rep), &xtilde).unwrap();
        let dd = (&general.d - &exact.d).amax();
        let dq = (&general.q - &exact.q).amax();
        assert!(dd < 1e-12 && dq < 1e-9, "m = {m}, k = {k}: {dd:e} {dq:e}");
    }
}

#[test]
fn seeded_simulation_is_reproducible() {
    let p = CanonicalProblem::from_canonical(12, 3, DVector::from_element(1, 0.5), DMatrix::from_element(1, 1, 1.0))
        .unwrap();
    let params = CanonicalParams::new(DVector::from_element(1, 1.0), DVector::zeros(2), 1.0).unwrap();
    let a = p.simulate_seeded(&params, 5, 17).unwrap();
    let b = p.simulate_seeded(&params, 5, 17).unwrap();
    let c = p.simulate_seeded(&params, 5, 18).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn design_strategy() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=5, 1usize..=6, 1usize..=8, any::<u64>()).prop_map(|(k, m, extra, seed)| {
        let mut rng = stream_rng(seed, Domain::Instances, 1);
        let n = k + extra;
        let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-2.0..2.0));
        let xtilde = DMatrix::from_fn(m, k, |_, _| rng.random_range(-2.0..2.0));
        (x, xtilde)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_designs_satisfy_invariants((x, xtilde) in design_strategy()) {
        let p = CanonicalProblem::from_design(&x, &xtilde).unwrap();
        let report = p.check_invariants();
        prop_assert!(report.all_pass(), "{report:?}");
        prop_assert_eq!(p.l, x.ncols().min(xtilde.nrows()));
        prop_assert_eq!(matches!(p.transform, Some(Transform::CaseI { .. })), xtilde.nrows() >= x.ncols());
    }

    #[test]
    fn problem_files_round_trip((x, xtilde) in design_strategy()) {
        let p = CanonicalProblem::from_design(&x, &xtilde).unwrap();
        let back = parse_problem_json(&problem_to_json(&p).unwrap()).unwrap();
        prop_assert_eq!(&back.d, &p.d);
        prop_assert_eq!(&back.q, &p.q);
        prop_assert_eq!(&back.transform, &p.transform);
        prop_assert_eq!(&back.xtx_inv, &p.xtx_inv);
    }
}
