use devbound::bregman::BregmanSpec;
use devbound::linalg::{sq_dist, Matrix};
use proptest::prelude::*;

fn specs() -> Vec<BregmanSpec> {
    let a = Matrix::from_rows(&[
        vec![2.0, 0.5, 0.0],
        vec![0.5, 1.0, 0.2],
        vec![0.0, 0.2, 3.0],
    ])
    .unwrap();
    vec![
        BregmanSpec::squared_euclidean(),
        BregmanSpec::quadratic_form(a).unwrap(),
        BregmanSpec::logcosh_quadratic(),
    ]
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 3)
}

fn tol(scale: f64) -> f64 {
    1e-10 * scale + 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn sandwich(x in point(), y in point()) {
        for spec in specs() {
            let b = spec.divergence(&x, &y).unwrap();
            let q = sq_dist(&x, &y);
            prop_assert!(b >= spec.r1 / 2.0 * q - tol(q), "{}: {b} < r1/2 {q}", spec.name());
            prop_assert!(b <= spec.r2 * q + tol(q), "{}: {b} > r2 {q}", spec.name());
        }
    }

    #[test]
    fn near_triangle(x in point(), y in point(), z in point()) {
        for spec in specs() {
            let lhs = spec.divergence(&x, &z).unwrap();
            let cross = spec.r2 * sq_dist(&x, &y).sqrt() * sq_dist(&y, &z).sqrt();
            let rhs = spec.divergence(&x, &y).unwrap() + spec.divergence(&y, &z).unwrap() + cross;
            prop_assert!(lhs <= rhs + tol(rhs), "{}", spec.name());
        }
    }

    #[test]
    fn closed_form_matches_definition(x in point(), y in point()) {
        for spec in specs() {
            let a = spec.divergence(&x, &y).unwrap();
            let b = spec.divergence_by_definition(&x, &y);
            let scale = a.abs().max(spec.value(&x).abs()).max(spec.value(&y).abs());
            prop_assert!((a - b).abs() <= 1e-9 * scale + 1e-9, "{}: {a} vs {b}", spec.name());
        }
    }

    #[test]
    fn squared_euclidean_identity(x in point(), y in point()) {
        let b = BregmanSpec::squared_euclidean().divergence(&x, &y).unwrap();
        let q = sq_dist(&x, &y);
        prop_assert!((b - q).abs() <= 1e-12 * q.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn zero_on_diagonal(x in point()) {
        for spec in specs() {
            prop_assert!(spec.divergence(&x, &x).unwrap().abs() < 1e-9);
        }
    }
}
