//! Seeded samplers with certified moment profiles.
//!
//! Draws are reproducible given `(seed, stream)`: each call seeds a
//! `ChaCha8Rng` from `seed` and selects `stream` with `set_stream`, so distinct
//! streams of one seed are independent. [`draw`] uses stream 0.
//!
//! Certified moment bounds `M` dominate `E‖X − E X‖^l` for `l = 1..p` in the
//! Euclidean norm:
//!
//! | kind | certificate |
//! |---|---|
//! | `gaussian` | exact, `σ^l 2^{l/2} Γ((d+l)/2)/Γ(d/2)` |
//! | `two_point` | exact, `a^l` |
//! | `student_t` | exact, Gaussian moment times `ν^{l/2} E W^{−l/2}`, `W ~ χ²_ν` |
//! | `shifted_pareto` | exact in `d = 1` (Beta function plus quadrature); power-mean bound for `d > 1` |
//! | `gmm_ground_truth` | Minkowski bound over components |

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Pareto, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::bregman::{BregmanSpec, CenterSet};
use crate::gmm::GmmParams;
use crate::linalg::Matrix;
use crate::moments::{MomentProfile, Norm};
use crate::{Error, Result};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// `mean + σ Z`, `Z` standard normal in `R^d`.
    Gaussian {
        d: usize,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        mean: Option<Vec<f64>>,
    },
    /// `±a·u` with probability 1/2 each, `u` the normalized direction.
    TwoPoint { a: f64, direction: Vec<f64> },
    /// Multivariate Student t: `σ Z sqrt(ν/W)`, `W ~ χ²_ν`.
    StudentT {
        nu: f64,
        d: usize,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Independent coordinates `Y − a/(a−1)` with `Y` Pareto(scale 1, shape `a`).
    ShiftedPareto { a: f64, d: usize },
    /// A Gaussian mixture with full covariances.
    GmmGroundTruth {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Matrix>,
    },
}

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { d, .. } | Self::StudentT { d, .. } | Self::ShiftedPareto { d, .. } => {
                *d
            }
            Self::TwoPoint { direction, .. } => direction.len(),
            Self::GmmGroundTruth { means, .. } => means.first().map_or(0, Vec::len),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::TwoPoint { .. } => "two_point",
            Self::StudentT { .. } => "student_t",
            Self::ShiftedPareto { .. } => "shifted_pareto",
            Self::GmmGroundTruth { .. } => "gmm_ground_truth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        match self {
            Self::Gaussian { d, sigma, mean } => {
                pos("sigma", *sigma)?;
                if mean.as_ref().is_some_and(|m| m.len() != *d) {
                    return Err(Error::invalid("mean length differs from d"));
                }
            }
            Self::TwoPoint { a, direction } => {
                if !(*a >= 0.0) || !a.is_finite() {
                    return Err(Error::invalid("a must be finite and nonnegative"));
                }
                if !(Norm::L2.of(direction) > 0.0) {
                    return Err(Error::invalid("direction must be nonzero"));
                }
            }
            Self::StudentT { nu, sigma, .. } => {
                pos("nu", *nu)?;
                pos("sigma", *sigma)?;
            }
            Self::ShiftedPareto { a, .. } => {
                if !(*a > 1.0) || !a.is_finite() {
                    return Err(Error::invalid(
                        "Pareto shape must exceed 1 for a finite mean",
                    ));
                }
            }
            Self::GmmGroundTruth {
                weights,
                means,
                covariances,
            } => {
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("mixture weights must sum to 1"));
                }
                // reuse component validation with permissive spectrum bounds
                GmmParams::new(
                    weights.clone(),
                    means.clone(),
                    covariances.clone(),
                    f64::MIN_POSITIVE,
                    f64::MAX,
                )?;
                for c in covariances {
                    if c.cholesky().is_none() {
                        return Err(Error::invalid("covariance is not positive definite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// `E X`.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Gaussian { d, mean, .. } => mean.clone().unwrap_or_else(|| vec![0.0; *d]),
            Self::TwoPoint { direction, .. } => vec![0.0; direction.len()],
            Self::StudentT { d, .. } | Self::ShiftedPareto { d, .. } => vec![0.0; *d],
            Self::GmmGroundTruth { weights, means, .. } => {
                let d = self.dim();
                let mut out = vec![0.0; d];
                for (w, m) in weights.iter().zip(means) {
                    for (o, v) in out.iter_mut().zip(m) {
                        *o += w * v;
                    }
                }
                out
            }
        }
    }
}

fn pos(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Per-draw sampler with precomputed factors.
enum Sampler {
    Gaussian {
        mean: Vec<f64>,
        sigma: f64,
    },
    TwoPoint {
        v: Vec<f64>,
    },
    StudentT {
        d: usize,
        sigma: f64,
        nu: f64,
        chi: ChiSquared<f64>,
    },
    Pareto {
        d: usize,
        shift: f64,
        dist: Pareto<f64>,
    },
    Gmm {
        cum: Vec<f64>,
        means: Vec<Vec<f64>>,
        factors: Vec<crate::linalg::Cholesky>,
    },
}

impl Sampler {
    fn new(dist: &DistributionSpec) -> Result<Self> {
        dist.validate()?;
        Ok(match dist {
            DistributionSpec::Gaussian { sigma, .. } => Sampler::Gaussian {
                mean: dist.mean(),
                sigma: *sigma,
            },
            DistributionSpec::TwoPoint { a, direction } => {
                let n = Norm::L2.of(direction);
                Sampler::TwoPoint {
                    v: direction.iter().map(|u| a * u / n).collect(),
                }
            }
            DistributionSpec::StudentT { nu, d, sigma } => Sampler::StudentT {
                d: *d,
                sigma: *sigma,
                nu: *nu,
                chi: ChiSquared::new(*nu).map_err(|e| Error::invalid(e.to_string()))?,
            },
            DistributionSpec::ShiftedPareto { a, d } => Sampler::Pareto {
                d: *d,
                shift: a / (a - 1.0),
                dist: Pareto::new(1.0, *a).map_err(|e| Error::invalid(e.to_string()))?,
            },
            DistributionSpec::GmmGroundTruth {
                weights,
                means,
                covariances,
            } => {
                let mut acc = 0.0;
                let cum = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                let factors = covariances
                    .iter()
                    .map(|c| {
                        c.cholesky()
                            .ok_or_else(|| Error::invalid("covariance not positive definite"))
                    })
                    .collect::<Result<_>>()?;
                Sampler::Gmm {
                    cum,
                    means: means.clone(),
                    factors,
                }
            }
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Sampler::Gaussian { mean, sigma } => mean
                .iter()
                .map(|m| m + sigma * Distribution::<f64>::sample(&StandardNormal, rng))
                .collect(),
            Sampler::TwoPoint { v } => {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                v.iter().map(|x| s * x).collect()
            }
            Sampler::StudentT { d, sigma, nu, chi } => {
                let z: Vec<f64> = (0..*d).map(|_| StandardNormal.sample(rng)).collect();
                let w = chi.sample(rng);
                let s = sigma * (nu / w).sqrt();
                z.into_iter().map(|v: f64| v * s).collect()
            }
            Sampler::Pareto { d, shift, dist } => {
                (0..*d).map(|_| dist.sample(rng) - shift).collect()
            }
            Sampler::Gmm {
                cum,
                means,
                factors,
            } => {
                let u: f64 = rng.random();
                let i = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                let z: Vec<f64> = (0..means[i].len())
                    .map(|_| StandardNormal.sample(rng))
                    .collect();
                factors[i]
                    .factor_mul(&z)
                    .into_iter()
                    .zip(&means[i])
                    .map(|(a, b)| a + b)
                    .collect()
            }
        }
    }
}

/// `m` draws from stream 0 of `seed`.
pub fn draw(dist: &DistributionSpec, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    draw_stream(dist, m, seed, 0)
}

/// `m` draws from stream `stream` of `seed`.
pub fn draw_stream(
    dist: &DistributionSpec,
    m: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::invalid("m must be >= 1"));
    }
    let sampler = Sampler::new(dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok((0..m).map(|_| sampler.sample(&mut rng)).collect())
}

/// `E‖Z‖^l` for standard normal `Z` in `R^d`.
pub fn gaussian_norm_moment(d: usize, l: f64) -> f64 {
    let df = d as f64;
    (l / 2.0 * 2f64.ln() + ln_gamma((df + l) / 2.0) - ln_gamma(df / 2.0)).exp()
}

/// `E|Y − μ|^l` for `Y` Pareto(1, a) and `μ = a/(a−1)`, `l < a`.
pub fn pareto_central_moment(a: f64, l: f64) -> f64 {
    let mu = a / (a - 1.0);
    let upper = a * mu.powf(l - a) * ln_beta(a - l, l + 1.0).exp();
    // Simpson on [1, μ]; the integrand is smooth there
    let n = 4000;
    let h = (mu - 1.0) / n as f64;
    let f = |y: f64| (mu - y).powf(l) * a * y.powf(-a - 1.0);
    let mut s = f(1.0) + f(mu);
    for i in 1..n {
        let y = 1.0 + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(y);
    }
    upper + s * h / 3.0
}

/// Certified bound on `E‖X − E X‖^l` for one order `l`.
pub fn certified_order(dist: &DistributionSpec, l: u32) -> Result<f64> {
    dist.validate()?;
    let lf = l as f64;
    let d = dist.dim();
    Ok(match dist {
        DistributionSpec::Gaussian { sigma, .. } => sigma.powf(lf) * gaussian_norm_moment(d, lf),
        DistributionSpec::TwoPoint { a, .. } => a.powf(lf),
        DistributionSpec::StudentT { nu, sigma, .. } => {
            if *nu <= lf {
                return Err(Error::UnsupportedOrder {
                    kind: format!("student_t(nu = {nu})"),
                    order: l,
                });
            }
            let w = (-lf / 2.0 * 2f64.ln() + ln_gamma((nu - lf) / 2.0) - ln_gamma(nu / 2.0)).exp();
            sigma.powf(lf) * gaussian_norm_moment(d, lf) * nu.powf(lf / 2.0) * w
        }
        DistributionSpec::ShiftedPareto { a, .. } => {
            if *a <= lf.max(2.0) {
                return Err(Error::UnsupportedOrder {
                    kind: format!("shifted_pareto(a = {a})"),
                    order: l,
                });
            }
            let df = d as f64;
            if d == 1 {
                pareto_central_moment(*a, lf)
            } else if l == 1 {
                (df * pareto_central_moment(*a, 2.0)).sqrt()
            } else {
                df.powf(lf / 2.0) * pareto_central_moment(*a, lf)
            }
        }
        DistributionSpec::GmmGroundTruth {
            weights,
            means,
            covariances,
        } => {
            let center = dist.mean();
            let g = gaussian_norm_moment(d, lf).powf(1.0 / lf);
            let mut total = 0.0;
            for ((w, m), c) in weights.iter().zip(means).zip(covariances) {
                let lmax = c
                    .symmetric_eigen()?
                    .values
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max);
                total += w * (Norm::L2.dist(m, &center) + lmax.sqrt() * g).powf(lf);
            }
            total
        }
    })
}

/// Moment profile of order `p` centered at the population mean.
pub fn certified_moment(dist: &DistributionSpec, p: u32) -> Result<MomentProfile> {
    if p == 0 {
        return Err(Error::invalid("p must be >= 1"));
    }
    let mut m = 0.0_f64;
    for l in 1..=p {
        m = m.max(certified_order(dist, l)?);
    }
    MomentProfile::new(p, m, Norm::L2, dist.mean())
}

/// A cost to be integrated against a distribution.
#[derive(Debug, Clone, Copy)]
pub enum CostModel<'a> {
    Hard {
        spec: &'a BregmanSpec,
        centers: &'a CenterSet,
    },
    /// Mixture log-likelihood `ln Σ αᵢ p_θᵢ(x)`.
    Mixture(&'a GmmParams),
}

/// Held-out points for Monte Carlo population costs, drawn once and reused.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub points: Vec<Vec<f64>>,
}

/// Monte Carlo estimate with CLT standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl EvalSet {
    pub fn draw(dist: &DistributionSpec, n_eval: usize, seed: u64, stream: u64) -> Result<Self> {
        Ok(Self {
            points: draw_stream(dist, n_eval, seed, stream)?,
        })
    }

    pub fn estimate(&self, model: CostModel<'_>) -> Result<Estimate> {
        let values: Vec<f64> = match model {
            CostModel::Hard { spec, centers } => {
                if centers.is_empty() {
                    return Err(Error::invalid("center set is empty"));
                }
                self.points
                    .par_iter()
                    .map(|x| spec.assign(&centers.centers, x).1)
                    .collect()
            }
            CostModel::Mixture(params) => {
                let ev = params.evaluator()?;
                self.points.par_iter().map(|x| ev.cost(x)).collect()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite cost in evaluation set".into()));
        }
        Ok(mean_and_se(&values))
    }
}

/// Mean and standard error `s/√n` (zero for a single value).
pub fn mean_and_se(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Monte Carlo population cost over `n_eval` fresh draws (stream 0 of `seed`).
pub fn population_cost(
    dist: &DistributionSpec,
    model: CostModel<'_>,
    n_eval: usize,
    seed: u64,
) -> Result<Estimate> {
    EvalSet::draw(dist, n_eval, seed, 0)?.estimate(model)
}

/// One point per row.
pub fn write_sample_csv<W: Write>(sample: &[Vec<f64>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let d = sample.first().map_or(0, Vec::len);
    out.write_record((0..d).map(|i| format!("x{i}")))?;
    for x in sample {
        out.write_record(x.iter().map(|v| format!("{v:e}")))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DistributionSpec {
        DistributionSpec::TwoPoint {
            a: 1.0,
            direction: vec![1.0],
        }
    }

    #[test]
    fn two_point_draws() {
        let a = draw(&two_point(), 4, 9).unwrap();
        let b = draw(&two_point(), 4, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x[0] == 1.0 || x[0] == -1.0));
        let mean = crate::moments::sample_mean(&a).unwrap()[0];
        assert!((-1.0..=1.0).contains(&mean));
        assert_ne!(
            draw_stream(&two_point(), 64, 9, 1).unwrap(),
            draw_stream(&two_point(), 64, 9, 2).unwrap()
        );
    }

    #[test]
    fn gaussian_covariance() {
        let g = DistributionSpec::Gaussian {
            d: 2,
            sigma: 1.0,
            mean: None,
        };
        let s = draw(&g, 100_000, 4).unwrap();
        let mean = crate::moments::sample_mean(&s).unwrap();
        let cov = crate::gmm::empirical_covariance(&s, &mean, None);
        assert!(cov.sub(&Matrix::identity(2)).max_abs() < 0.05);
    }

    #[test]
    fn certificates() {
        for p in [2, 4, 6, 8] {
            let prof = certified_moment(&two_point(), p).unwrap();
            assert_eq!(prof.m, 1.0);
        }
        let g = DistributionSpec::Gaussian {
            d: 1,
            sigma: 1.0,
            mean: None,
        };
        assert!(
            (certified_order(&g, 1).unwrap() - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14
        );
        assert!((certified_moment(&g, 2).unwrap().m - 1.0).abs() < 1e-14);

        let t5 = DistributionSpec::StudentT {
            nu: 5.0,
            d: 1,
            sigma: 1.0,
        };
        assert!(matches!(
            certified_moment(&t5, 6),
            Err(Error::UnsupportedOrder { .. })
        ));
        let t9 = DistributionSpec::StudentT {
            nu: 9.0,
            d: 2,
            sigma: 1.0,
        };
        assert!((certified_order(&t9, 4).unwrap() - 648.0 / 35.0).abs() < 1e-10);
        // Var of t_ν is ν/(ν−2) per coordinate
        assert!((certified_order(&t9, 2).unwrap() - 2.0 * 9.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn pareto_second_moment() {
        // Var Y = a/((a−1)²(a−2))
        let a = 5.0;
        let v = pareto_central_moment(a, 2.0);
        assert!((v - a / ((a - 1.0f64).powi(2) * (a - 2.0))).abs() < 1e-10);
        let p = DistributionSpec::ShiftedPareto { a: 5.0, d: 1 };
        assert!(matches!(
            certified_moment(&p, 6),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn population_cost_examples() {
        let spec = BregmanSpec::squared_euclidean();
        let c0 = CenterSet::new(vec![vec![0.0]], 1).unwrap();
        let e = population_cost(
            &two_point(),
            CostModel::Hard {
                spec: &spec,
                centers: &c0,
            },
            10_000,
            1,
        )
        .unwrap();
        assert!((e.mean - 1.0).abs() <= 3.0 * e.std_error + 1e-12);

        let both = CenterSet::new(vec![vec![-1.0], vec![1.0]], 2).unwrap();
        let e = population_cost(
            &two_point(),
            CostModel::Hard {
                spec: &spec,
                centers: &both,
            },
            1000,
            1,
        )
        .unwrap();
        assert_eq!(e.mean, 0.0);

        let g = DistributionSpec::Gaussian {
            d: 1,
            sigma: 1.0,
            mean: None,
        };
        let e = population_cost(
            &g,
            CostModel::Hard {
                spec: &spec,
                centers: &c0,
            },
            1_000_000,
            2,
        )
        .unwrap();
        assert!((e.mean - 1.0).abs() <= 3.0 * e.std_error);
    }

    #[test]
    fn gmm_truth_sampling() {
        let dist = DistributionSpec::GmmGroundTruth {
            weights: vec![0.3, 0.7],
            means: vec![vec![-2.0], vec![1.0]],
            covariances: vec![Matrix::diag(&[0.5]), Matrix::diag(&[2.0])],
        };
        let s = draw(&dist, 200_000, 3).unwrap();
        let m = crate::moments::sample_mean(&s).unwrap()[0];
        assert!((m - dist.mean()[0]).abs() < 0.02);
        let prof = certified_moment(&dist, 4).unwrap();
        let emp = crate::moments::empirical_moments(&s, &dist.mean(), 4, Norm::L2);
        assert!(emp.iter().all(|&e| e <= prof.m * 1.05));
    }

    #[test]
    fn spec_json_roundtrip() {
        let t = DistributionSpec::StudentT {
            nu: 9.0,
            d: 2,
            sigma: 1.0,
        };
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"kind\":\"student_t\""));
        let back: DistributionSpec =
            serde_json::from_str(r#"{"kind":"student_t","nu":9,"d":2}"#).unwrap();
        assert_eq!(back, t);
    }
}
