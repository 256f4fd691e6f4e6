use devbound::distributions::{certified_order, draw, mean_and_se, DistributionSpec};
use devbound::linalg::{rotation2, Matrix};
use devbound::moments::Norm;

const N: usize = 1_000_000;

/// Whether the certificate is an exact value (two-sided check) or an upper bound.
struct Case {
    dist: DistributionSpec,
    p: u32,
    exact: bool,
    /// Largest order whose estimator has finite variance.
    finite_var_order: u32,
}

fn cases() -> Vec<Case> {
    let cov = rotation2(0.7)
        .matmul(&Matrix::diag(&[0.5, 2.0]))
        .matmul(&rotation2(0.7).transpose());
    vec![
        Case {
            dist: DistributionSpec::Gaussian {
                d: 3,
                sigma: 1.5,
                mean: Some(vec![1.0, -2.0, 0.5]),
            },
            p: 8,
            exact: true,
            finite_var_order: 8,
        },
        Case {
            dist: DistributionSpec::TwoPoint {
                a: 2.0,
                direction: vec![1.0, 1.0],
            },
            p: 8,
            exact: true,
            finite_var_order: 8,
        },
        Case {
            dist: DistributionSpec::StudentT {
                nu: 9.0,
                d: 2,
                sigma: 1.0,
            },
            p: 8,
            exact: true,
            finite_var_order: 4,
        },
        Case {
            dist: DistributionSpec::ShiftedPareto { a: 20.0, d: 1 },
            p: 8,
            exact: true,
            finite_var_order: 8,
        },
        Case {
            dist: DistributionSpec::ShiftedPareto { a: 12.0, d: 2 },
            p: 8,
            exact: false,
            finite_var_order: 5,
        },
        Case {
            dist: DistributionSpec::GmmGroundTruth {
                weights: vec![0.3, 0.7],
                means: vec![vec![-2.0, 0.0], vec![1.0, 1.0]],
                covariances: vec![cov, Matrix::identity(2)],
            },
            p: 8,
            exact: false,
            finite_var_order: 8,
        },
    ]
}

#[test]
fn certified_moments_hold_empirically() {
    for (i, case) in cases().into_iter().enumerate() {
        let xs = draw(&case.dist, N, 1000 + i as u64).unwrap();
        let mu = case.dist.mean();
        let norms: Vec<f64> = xs.iter().map(|x| Norm::L2.dist(x, &mu)).collect();
        for l in 1..=case.p {
            let vals: Vec<f64> = norms.iter().map(|r| r.powi(l as i32)).collect();
            let est = mean_and_se(&vals);
            let cert = certified_order(&case.dist, l).unwrap();
            let slack = 5.0 * est.std_error + 1e-12 * cert;
            assert!(
                est.mean <= cert + slack,
                "{} order {l}: empirical {} above certificate {cert}",
                case.dist.name(),
                est.mean
            );
            if case.exact && l <= case.finite_var_order {
                assert!(
                    est.mean >= cert - slack,
                    "{} order {l}: empirical {} far below exact value {cert}",
                    case.dist.name(),
                    est.mean
                );
            }
        }
    }
}

#[test]
fn empirical_means_center_on_population_mean() {
    for (i, case) in cases().into_iter().enumerate() {
        let xs = draw(&case.dist, 200_000, 77 + i as u64).unwrap();
        let mu = case.dist.mean();
        for j in 0..mu.len() {
            let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
            let est = mean_and_se(&col);
            assert!(
                (est.mean - mu[j]).abs() <= 5.0 * est.std_error,
                "{}",
                case.dist.name()
            );
        }
    }
}

#[test]
fn unsupported_orders_are_rejected() {
    let t = DistributionSpec::StudentT {
        nu: 5.0,
        d: 1,
        sigma: 1.0,
    };
    assert!(certified_order(&t, 4).is_ok());
    assert!(certified_order(&t, 5).is_err());
    let p = DistributionSpec::ShiftedPareto { a: 3.0, d: 1 };
    assert!(certified_order(&p, 3).is_err());
}
