//! Random-probe soundness checks for the covers.

use devbound::bregman::BregmanSpec;
use devbound::covers::{
    bregman_center_cover, covariance_cover, covariance_match, lp_ball_cover, mixture_cover,
    nearest_covariance, CoverReport,
};
use devbound::gmm::GmmParams;
use devbound::linalg::{rotation2, Matrix};
use devbound::moments::Norm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub probes: usize,
    pub violations: usize,
    pub enumerated: Option<usize>,
    pub size_bound: f64,
    pub worst: f64,
}

impl ProbeOutcome {
    pub fn ok(&self) -> bool {
        self.violations == 0 && self.enumerated.is_none_or(|n| n as f64 <= self.size_bound)
    }
}

pub fn in_ball(rng: &mut ChaCha8Rng, r: f64, d: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-r..=r)).collect();
        if Norm::L2.of(&x) <= r {
            return x;
        }
    }
}

fn random_cov(rng: &mut ChaCha8Rng, s1: f64, s2: f64, d: usize) -> Matrix {
    let l: Vec<f64> = (0..d).map(|_| rng.random_range(s1..=s2)).collect();
    if d == 1 {
        return Matrix::diag(&l);
    }
    assert_eq!(d, 2);
    let r = rotation2(rng.random_range(0.0..std::f64::consts::TAU));
    r.matmul(&Matrix::diag(&l))
        .matmul(&r.transpose())
        .symmetrize()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    Norm::L2.dist(a, b)
}

pub fn lp(r: f64, d: usize, tau: f64, probes: usize, seed: u64) -> ProbeOutcome {
    let cover = lp_ball_cover(r, d, tau, 1_000_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x = in_ball(&mut rng, r, d);
        let (_, dist) = cover.nearest(&x, l2).unwrap();
        worst = worst.max(dist);
        if dist > tau {
            violations += 1;
        }
    }
    outcome(&cover, probes, violations, worst)
}

fn outcome(cover: &CoverReport, probes: usize, violations: usize, worst: f64) -> ProbeOutcome {
    ProbeOutcome {
        probes,
        violations,
        enumerated: cover.enumerated_len(),
        size_bound: cover.size_bound,
        worst,
    }
}

/// Center sets in the `R2`-ball replaced by their nearest cover elements; the
/// hard cost must agree within `eps` on points of the `R`-ball.
#[allow(clippy::too_many_arguments)]
pub fn bregman(
    spec: &BregmanSpec,
    r: f64,
    r2: f64,
    eps: f64,
    d: usize,
    k: usize,
    probes: usize,
    seed: u64,
) -> ProbeOutcome {
    let cover = bregman_center_cover(spec, r, r2, eps, d, 1_000_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let elems = cover.enumerated.as_ref().expect("enumerable scale");
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let p: Vec<Vec<f64>> = (0..k).map(|_| in_ball(&mut rng, r2, d)).collect();
        let q: Vec<Vec<f64>> = p
            .iter()
            .map(|c| elems[cover.nearest(c, l2).unwrap().0].clone())
            .collect();
        let mut gap = 0.0f64;
        for j in 0..64 {
            let mut x = in_ball(&mut rng, r, d);
            if j % 4 == 0 {
                // push to the boundary, where the gap is largest
                let n = Norm::L2.of(&x).max(1e-12);
                x.iter_mut().for_each(|v| *v *= r / n);
            }
            gap = gap.max((spec.assign(&p, &x).1 - spec.assign(&q, &x).1).abs());
        }
        worst = worst.max(gap);
        if gap > eps {
            violations += 1;
        }
    }
    outcome(&cover, probes, violations, worst)
}

/// Exhaustive nearest search: an element within `e^{±eps}` in determinant and
/// `eps` in spectral norm.
pub fn covariance(s1: f64, s2: f64, eps: f64, d: usize, probes: usize, seed: u64) -> ProbeOutcome {
    let cover = covariance_cover(s1, s2, eps, d, 1_000_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let a = random_cov(&mut rng, s1, s2, d);
        match nearest_covariance(&cover, &a, eps) {
            Some((b, _, _)) => {
                let (ratio, spec) = covariance_match(&a, &b).unwrap();
                worst = worst.max(spec);
                if ratio.abs() > eps || spec > eps {
                    violations += 1;
                }
            }
            None => violations += 1,
        }
    }
    outcome(&cover, probes, violations, worst)
}

/// Partial mixtures rounded onto the cover; log-densities must agree within
/// `eps` on the `R`-ball.
#[allow(clippy::too_many_arguments)]
pub fn mixture(
    r: f64,
    r2: f64,
    s1: f64,
    s2: f64,
    c1: f64,
    k: usize,
    eps: f64,
    d: usize,
    probes: usize,
    seed: u64,
) -> ProbeOutcome {
    let cover = mixture_cover(r, r2, s1, s2, c1, k, eps, d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = vec![0.0; d];
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mass = rng.random_range(c1..=1.0);
        w.iter_mut().for_each(|v| *v *= mass / total);
        let params = GmmParams::new(
            w,
            (0..k).map(|_| in_ball(&mut rng, r2, d)).collect(),
            (0..k).map(|_| random_cov(&mut rng, s1, s2, d)).collect(),
            s1,
            s2,
        )
        .unwrap();
        let rounded = cover.round(&params, &center).unwrap();
        let (a, b) = (params.evaluator().unwrap(), rounded.evaluator().unwrap());
        let mut gap = 0.0f64;
        for _ in 0..64 {
            let x = in_ball(&mut rng, r, d);
            gap = gap.max((a.cost(&x) - b.cost(&x)).abs());
        }
        worst = worst.max(gap);
        if gap > eps {
            violations += 1;
        }
    }
    ProbeOutcome {
        probes,
        violations,
        enumerated: None,
        size_bound: cover.size_bound,
        worst,
    }
}
