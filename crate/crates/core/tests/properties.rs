use lognorm_core::certify::{
    certify_kind, envelope_spotcheck, verify_transition_bound, CertifyConfig,
};
use lognorm_core::linalg::{
    log_norm, log_norm_limit, lyapunov_residual, lyapunov_solve, mat_induced_norm,
    mu_weighted_hurwitz, sym_eig_max, vec_norm, DEFAULT_H_SCHEDULE, EIG_TOL,
};
use lognorm_core::odesim::IntegratorSettings;
use lognorm_core::system::CustomPerturbation;
use lognorm_core::{builtin_scenario, Matrix, MatrixFunction, NormKind, Perturbation};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use std::collections::BTreeMap;

fn square(max_n: usize, range: f64) -> impl Strategy<Value = Matrix> {
    (2..=max_n).prop_flat_map(move |n| {
        vec(-range..range, n * n).prop_map(move |d| Matrix::new(n, n, d).unwrap())
    })
}

fn pair(max_n: usize, range: f64) -> impl Strategy<Value = (Matrix, Matrix)> {
    (2..=max_n).prop_flat_map(move |n| {
        (vec(-range..range, n * n), vec(-range..range, n * n))
            .prop_map(move |(a, b)| (Matrix::new(n, n, a).unwrap(), Matrix::new(n, n, b).unwrap()))
    })
}

/// Bᵀ B + I, symmetric positive definite.
fn spd(b: &Matrix) -> Matrix {
    let n = b.rows();
    b.transpose()
        .matmul(b)
        .unwrap()
        .add(&Matrix::identity(n))
        .unwrap()
        .symmetric_part_doubled()
        .scale(0.5)
}

fn kinds(weight_seed: &Matrix) -> Vec<NormKind> {
    vec![
        NormKind::One,
        NormKind::Two,
        NormKind::Inf,
        NormKind::weighted(spd(weight_seed)).unwrap(),
    ]
}

fn tol(a: &Matrix, b: &Matrix) -> f64 {
    1e-10 * (1.0 + a.frobenius_norm() + b.frobenius_norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn subadditive((a, b) in pair(6, 10.0)) {
        for kind in kinds(&b) {
            let lhs = log_norm(&a.add(&b).unwrap(), &kind).unwrap();
            let rhs = log_norm(&a, &kind).unwrap() + log_norm(&b, &kind).unwrap();
            prop_assert!(lhs <= rhs + tol(&a, &b), "{kind}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn positively_homogeneous(a in square(6, 10.0), c in 0.0..50.0f64) {
        for kind in kinds(&a) {
            let lhs = log_norm(&a.scale(c), &kind).unwrap();
            let rhs = c * log_norm(&a, &kind).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + c) * (1.0 + a.frobenius_norm()));
        }
    }

    #[test]
    fn lipschitz_in_induced_norm((a, b) in pair(6, 10.0)) {
        for kind in kinds(&b) {
            let gap = (log_norm(&a, &kind).unwrap() - log_norm(&b, &kind).unwrap()).abs();
            let dist = mat_induced_norm(&a.sub(&b).unwrap(), &kind).unwrap();
            prop_assert!(gap <= dist + tol(&a, &b), "{kind}: {gap} > {dist}");
        }
    }

    #[test]
    fn bounded_by_induced_norm(a in square(6, 10.0)) {
        for kind in kinds(&a) {
            let mu = log_norm(&a, &kind).unwrap();
            let norm = mat_induced_norm(&a, &kind).unwrap();
            prop_assert!(mu.abs() <= norm + tol(&a, &a));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn closed_form_matches_limit_definition(a in square(5, 5.0)) {
        for kind in kinds(&a) {
            let mu = log_norm(&a, &kind).unwrap();
            let lim = log_norm_limit(&a, &kind, &DEFAULT_H_SCHEDULE).unwrap();
            prop_assert!((mu - lim.value).abs() <= 1e-6 * (1.0 + a.frobenius_norm()), "{kind}: {mu} vs {}", lim.value);
        }
    }

    #[test]
    fn vector_norm_chain(x in (1usize..=16).prop_flat_map(|n| vec(-100.0..100.0f64, n))) {
        let n = x.len() as f64;
        let one = vec_norm(&x, &NormKind::One).unwrap();
        let two = vec_norm(&x, &NormKind::Two).unwrap();
        let inf = vec_norm(&x, &NormKind::Inf).unwrap();
        let eps = 1e-12 * (1.0 + one);
        prop_assert!(inf <= two + eps);
        prop_assert!(two <= one + eps);
        prop_assert!(one <= n.sqrt() * two + eps);
        prop_assert!(two <= n.sqrt() * inf + eps);
    }

    #[test]
    fn matrix_norm_chain(a in square(8, 10.0)) {
        let n = a.rows() as f64;
        let one = mat_induced_norm(&a, &NormKind::One).unwrap();
        let two = mat_induced_norm(&a, &NormKind::Two).unwrap();
        let inf = mat_induced_norm(&a, &NormKind::Inf).unwrap();
        let eps = 1e-10 * (1.0 + a.frobenius_norm());
        prop_assert!(two <= (one * inf).sqrt() + eps);
        prop_assert!(two <= a.frobenius_norm() + eps);
        prop_assert!(one <= n.sqrt() * two + eps);
        prop_assert!(inf <= n.sqrt() * two + eps);
        prop_assert!(two <= n.sqrt() * one.min(inf) + eps);
    }

    #[test]
    fn spectral_norm_matches_eigenvalue(a in square(6, 10.0)) {
        let ata = a.transpose().matmul(&a).unwrap();
        let lam = sym_eig_max(&ata, EIG_TOL).unwrap().max();
        let two = mat_induced_norm(&a, &NormKind::Two).unwrap();
        prop_assert!((two - lam.max(0.0).sqrt()).abs() <= 1e-9 * (1.0 + two));
    }
}

/// S − D with D a diagonal shift beyond every Gershgorin radius.
fn hurwitz() -> impl Strategy<Value = Matrix> {
    (2usize..=6).prop_flat_map(|n| {
        (vec(-5.0..5.0f64, n * n), 0.1..3.0f64).prop_map(move |(d, margin)| {
            let mut s = Matrix::new(n, n, d).unwrap();
            for i in 0..n {
                let radius: f64 = (0..n).map(|j| s[(i, j)].abs()).sum();
                s[(i, i)] -= radius + margin;
            }
            s
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lyapunov_weighted_mu(a in hurwitz()) {
        let h = lyapunov_solve(&a).unwrap();
        prop_assert!(lyapunov_residual(&a, &h).unwrap() <= 1e-9 * (1.0 + h.frobenius_norm()));
        let closed = mu_weighted_hurwitz(&a).unwrap();
        let weighted = log_norm(&a, &NormKind::weighted(h).unwrap()).unwrap();
        prop_assert!(closed < 0.0);
        prop_assert!((closed - weighted).abs() <= 1e-8 * closed.abs().max(1.0), "{closed} vs {weighted}");
    }
}

fn no_params() -> BTreeMap<String, serde_json::Value> {
    BTreeMap::new()
}

fn settings() -> IntegratorSettings {
    IntegratorSettings::with_tolerances(1e-11, 1e-14)
}

#[test]
fn transition_bound_on_examples() {
    for (name, horizon) in [("example2", 5.0), ("example3", 4.0)] {
        let s = builtin_scenario(name, &no_params()).unwrap();
        for kind in [NormKind::One, NormKind::Two, NormKind::Inf] {
            let check =
                verify_transition_bound(&s.matrix, &kind, horizon, 100, 200, 7, &settings())
                    .unwrap();
            assert!(check.max_ratio <= 1.0 + 1e-6, "{name} {kind}: {check:?}");
        }
    }
}

#[test]
fn transition_bound_on_random_constant_systems() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for k in 0..20 {
        let a = square(4, 2.0).new_tree(&mut runner).unwrap().current();
        let mf = MatrixFunction::Constant(a.clone());
        for kind in kinds(&a) {
            let check = verify_transition_bound(&mf, &kind, 2.0, 40, 100, k, &settings()).unwrap();
            assert!(
                check.max_ratio <= 1.0 + 1e-6,
                "system {k} {kind}: {check:?}"
            );
        }
    }
}

#[test]
fn certification_is_deterministic() {
    let s = builtin_scenario("example2", &no_params()).unwrap();
    let config = CertifyConfig {
        simulate: true,
        seed: 3,
        ..CertifyConfig::default()
    };
    let a = certify_kind(&s, &NormKind::Two, &config);
    let b = certify_kind(&s, &NormKind::Two, &config);
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.simulation.violations, 0);
}

#[test]
fn builtin_perturbations_respect_their_envelopes() {
    for name in ["example2", "example3"] {
        let s = builtin_scenario(name, &no_params()).unwrap();
        let p = s.perturbation.as_ref().unwrap();
        for kind in [NormKind::One, NormKind::Two, NormKind::Inf] {
            let check = envelope_spotcheck(p, &kind, 2000, (0.0, 20.0), 10.0, 1).unwrap();
            assert!(check.passed, "{name} {kind}: {:?}", check.witness);
        }
    }
}

#[test]
fn spotcheck_finds_state_dependent_violation() {
    let p = Perturbation::Custom(
        CustomPerturbation::new(2, |x: &[f64], _t: f64| vec![0.5 * x[0], 0.5 * x[1]])
            .with_envelope(|_, _| 1.0),
    );
    let check = envelope_spotcheck(&p, &NormKind::Two, 5000, (0.0, 1.0), 10.0, 9).unwrap();
    assert!(!check.passed);
    let w = check.witness.unwrap();
    assert!(w.norm > w.envelope);
}
