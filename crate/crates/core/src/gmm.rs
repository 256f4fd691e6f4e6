//! Bounded-spectrum Gaussian mixtures: log-density, mixture log-likelihood, the
//! restriction of a mixture to the components whose means lie in a ball, and a
//! spectrum-constrained EM fitter.
//!
//! All density arithmetic happens in log space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{Cholesky, Matrix};
use crate::moments::Norm;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// One Gaussian component with its covariance factorized once.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    chol: Cholesky,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: &[f64], cov: &Matrix) -> Result<Self> {
        if cov.dim() != mean.len() {
            return Err(Error::invalid("mean and covariance dimensions differ"));
        }
        if !cov.is_symmetric(1e-9) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + chol.log_det());
        Ok(Self {
            mean: mean.to_vec(),
            chol,
            log_norm,
        })
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut buf = [0.0_f64; 16];
        let mut heap;
        let diff: &mut [f64] = if d <= 16 {
            &mut buf[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for ((t, a), b) in diff.iter_mut().zip(x).zip(&self.mean) {
            *t = a - b;
        }
        self.log_norm - 0.5 * self.chol.mahalanobis_sq(diff)
    }
}

/// `ln p_θ(x)` for a single Gaussian.
pub fn log_density(mean: &[f64], cov: &Matrix, x: &[f64]) -> Result<f64> {
    Ok(Gaussian::new(mean, cov)?.log_density(x))
}

/// Stable `ln Σ exp(vᵢ)`; `-inf` for an empty input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mixture parameters with covariance spectra bounded in `[sigma1, sigma2]`.
///
/// Weights need not sum to one: partial mixtures (the result of
/// [`GmmParams::restrict`]) are legal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Matrix>,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl GmmParams {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Matrix>,
        sigma1: f64,
        sigma2: f64,
    ) -> Result<Self> {
        if weights.len() != means.len() || weights.len() != covariances.len() {
            return Err(Error::invalid(
                "weights, means and covariances must have equal length",
            ));
        }
        if !(sigma1 > 0.0) || !(sigma2 >= sigma1) {
            return Err(Error::invalid(format!(
                "spectrum bounds must satisfy 0 < sigma1 <= sigma2, got ({sigma1}, {sigma2})"
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if let Some(d) = means.first().map(Vec::len) {
            if means.iter().any(|m| m.len() != d) || covariances.iter().any(|c| c.dim() != d) {
                return Err(Error::invalid("component dimensions differ"));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
            sigma1,
            sigma2,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.means.first().map(Vec::len)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Whether every covariance has all eigenvalues in `[sigma1, sigma2]`
    /// (with a relative slack of `tol`).
    pub fn spectrum_ok(&self, tol: f64) -> bool {
        self.covariances.iter().all(|c| match c.symmetric_eigen() {
            Ok(e) => e
                .values
                .iter()
                .all(|&v| v >= self.sigma1 * (1.0 - tol) && v <= self.sigma2 * (1.0 + tol)),
            Err(_) => false,
        })
    }

    /// Precomputes the components for repeated evaluation.
    pub fn evaluator(&self) -> Result<MixtureEvaluator> {
        if !self.weights.iter().any(|w| *w > 0.0) {
            return Err(Error::invalid("mixture has no positive weight"));
        }
        let mut parts = Vec::new();
        for ((w, m), c) in self.weights.iter().zip(&self.means).zip(&self.covariances) {
            if *w > 0.0 {
                parts.push((w.ln(), Gaussian::new(m, c)?));
            }
        }
        Ok(MixtureEvaluator { parts })
    }

    /// `(α, Θ) ⊓ B`: components whose means lie in the ball, weights kept as-is.
    pub fn restrict(&self, center: &[f64], radius: f64) -> GmmParams {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| Norm::L2.dist(&self.means[i], center) <= radius)
            .collect();
        GmmParams {
            weights: keep.iter().map(|&i| self.weights[i]).collect(),
            means: keep.iter().map(|&i| self.means[i].clone()).collect(),
            covariances: keep.iter().map(|&i| self.covariances[i].clone()).collect(),
            sigma1: self.sigma1,
            sigma2: self.sigma2,
        }
    }
}

/// Factorized mixture for fast repeated `ln Σ αᵢ p_θᵢ(x)`.
#[derive(Debug, Clone)]
pub struct MixtureEvaluator {
    parts: Vec<(f64, Gaussian)>,
}

impl MixtureEvaluator {
    pub fn cost(&self, x: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut buf = [0.0_f64; 32];
        let mut heap;
        let terms: &mut [f64] = if self.parts.len() <= 32 {
            &mut buf[..self.parts.len()]
        } else {
            heap = vec![0.0; self.parts.len()];
            &mut heap
        };
        for (t, (lw, g)) in terms.iter_mut().zip(&self.parts) {
            *t = lw + g.log_density(x);
            max = max.max(*t);
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }
}

/// `ln(Σ αᵢ p_θᵢ(x))`.
pub fn mixture_cost(params: &GmmParams, x: &[f64]) -> Result<f64> {
    Ok(params.evaluator()?.cost(x))
}

/// Mean of [`mixture_cost`] over a sample.
pub fn mean_loglik(params: &GmmParams, sample: &[Vec<f64>]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::invalid("sample is empty"));
    }
    let ev = params.evaluator()?;
    Ok(sample.iter().map(|x| ev.cost(x)).sum::<f64>() / sample.len() as f64)
}

/// Membership in `S_mog(ρ̂; c, k, σ1, σ2)` with the comparison `mean ≤ c`.
pub fn is_feasible_mog(params: &GmmParams, sample: &[Vec<f64>], k: usize, c: f64) -> bool {
    if params.is_empty() || params.len() > k {
        return false;
    }
    let total = params.total_weight();
    if (total - 1.0).abs() > 1e-9 {
        return false;
    }
    if !params.spectrum_ok(1e-9) {
        return false;
    }
    if c == f64::INFINITY {
        return true;
    }
    matches!(mean_loglik(params, sample), Ok(v) if v <= c)
}

/// Eigenvalue clipping of a symmetric matrix into `[sigma1, sigma2]`.
pub fn spectrum_project(sigma: &Matrix, sigma1: f64, sigma2: f64) -> Result<Matrix> {
    if !(sigma1 > 0.0) || !(sigma2 >= sigma1) {
        return Err(Error::invalid(
            "spectrum bounds must satisfy 0 < sigma1 <= sigma2",
        ));
    }
    if !sigma.is_symmetric(1e-9) {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    let e = sigma.symmetric_eigen()?;
    if e.values.iter().all(|&v| v >= sigma1 && v <= sigma2) {
        return Ok(sigma.clone());
    }
    let clipped: Vec<f64> = e.values.iter().map(|v| v.clamp(sigma1, sigma2)).collect();
    Ok(e.reassemble_with(&clipped))
}

/// How M-step covariances that leave the spectrum range are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceRule {
    /// Clip eigenvalues into range.
    #[default]
    Clip,
    /// Keep the previous covariance when the update leaves the range.
    Discard,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmOptions {
    pub k: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub rule: CovarianceRule,
}

impl EmOptions {
    pub fn new(k: usize, sigma1: f64, sigma2: f64, seed: u64) -> Self {
        Self {
            k,
            sigma1,
            sigma2,
            restarts: 4,
            max_iters: 200,
            tol: 1e-10,
            seed,
            rule: CovarianceRule::Clip,
        }
    }
}

/// Per-iteration bookkeeping of an EM run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmStep {
    /// Mean log-likelihood of the parameters entering this iteration.
    pub loglik: f64,
    /// Whether the M-step of this iteration had to project or discard a covariance.
    pub projected: bool,
    /// Whether a component was reseeded in this iteration.
    pub reseeded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmRun {
    pub params: GmmParams,
    pub loglik: f64,
    pub history: Vec<EmStep>,
    pub restart: usize,
}

/// Best restart by final mean log-likelihood (ties to the lowest restart index).
pub fn em_fit(sample: &[Vec<f64>], opts: &EmOptions) -> Result<EmRun> {
    let runs = em_fit_all(sample, opts)?;
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.loglik > best.loglik { r } else { best })
        .expect("at least one restart"))
}

/// Every restart's result, in restart order.
pub fn em_fit_all(sample: &[Vec<f64>], opts: &EmOptions) -> Result<Vec<EmRun>> {
    if opts.k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if sample.len() < opts.k {
        return Err(Error::invalid(format!(
            "k = {} exceeds sample size {}",
            opts.k,
            sample.len()
        )));
    }
    if !(opts.sigma1 > 0.0) || !(opts.sigma2 >= opts.sigma1) {
        return Err(Error::invalid(
            "spectrum bounds must satisfy 0 < sigma1 <= sigma2",
        ));
    }
    let d = sample[0].len();
    if sample.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("sample points have inconsistent dimension"));
    }
    (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            em_single(sample, opts, &mut rng, r)
        })
        .collect()
}

fn em_single(
    sample: &[Vec<f64>],
    opts: &EmOptions,
    rng: &mut ChaCha8Rng,
    restart: usize,
) -> Result<EmRun> {
    let n = sample.len();
    let d = sample[0].len();
    let k = opts.k;

    // Initialization: distinct random sample points as means, projected pooled
    // covariance for every component, uniform weights.
    let pooled = spectrum_project(
        &empirical_covariance(sample, &crate::moments::sample_mean(sample)?, None),
        opts.sigma1,
        opts.sigma2,
    )?;
    let mut means = Vec::with_capacity(k);
    let mut used = Vec::with_capacity(k);
    while means.len() < k {
        let i = rng.random_range(0..n);
        if !used.contains(&i) || used.len() >= n {
            used.push(i);
            means.push(sample[i].clone());
        }
    }
    let mut params = GmmParams {
        weights: vec![1.0 / k as f64; k],
        means,
        covariances: vec![pooled; k],
        sigma1: opts.sigma1,
        sigma2: opts.sigma2,
    };

    let mut history = Vec::new();
    let mut resp = vec![0.0; n * k];
    for _ in 0..opts.max_iters.max(1) {
        // E-step
        let comps: Vec<Gaussian> = params
            .means
            .iter()
            .zip(&params.covariances)
            .map(|(m, c)| Gaussian::new(m, c))
            .collect::<Result<_>>()?;
        let log_w: Vec<f64> = params
            .weights
            .iter()
            .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
        let mut total = 0.0;
        for (i, x) in sample.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] = log_w[j] + comps[j].log_density(x);
            }
            let lse = log_sum_exp(row);
            total += lse;
            for r in row.iter_mut() {
                *r = (*r - lse).exp();
            }
        }
        let loglik = total / n as f64;
        let converged = history.last().is_some_and(|prev: &EmStep| {
            (loglik - prev.loglik).abs() <= opts.tol * loglik.abs().max(1.0)
        });

        // M-step
        let mut projected = false;
        let mut reseeded = false;
        let mut next = params.clone();
        for j in 0..k {
            let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if !(nj > 1e-8 * n as f64) {
                // degenerate responsibilities: restart this component at a random point
                reseeded = true;
                next.means[j] = sample[rng.random_range(0..n)].clone();
                next.covariances[j] = params.covariances[j].clone();
                next.weights[j] = 1.0 / k as f64;
                continue;
            }
            let mut mean = vec![0.0; d];
            for (i, x) in sample.iter().enumerate() {
                let r = resp[i * k + j];
                for (m, v) in mean.iter_mut().zip(x) {
                    *m += r * v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nj);
            let weights: Vec<f64> = (0..n).map(|i| resp[i * k + j]).collect();
            let cov = empirical_covariance(sample, &mean, Some(&weights));
            let in_range = cov
                .symmetric_eigen()
                .map(|e| {
                    e.values
                        .iter()
                        .all(|&v| v >= opts.sigma1 && v <= opts.sigma2)
                })
                .unwrap_or(false);
            next.covariances[j] = if in_range {
                cov
            } else {
                projected = true;
                match opts.rule {
                    CovarianceRule::Clip => spectrum_project(&cov, opts.sigma1, opts.sigma2)?,
                    CovarianceRule::Discard => params.covariances[j].clone(),
                }
            };
            next.means[j] = mean;
            next.weights[j] = nj / n as f64;
        }
        let wsum: f64 = next.weights.iter().sum();
        next.weights.iter_mut().for_each(|w| *w /= wsum);

        history.push(EmStep {
            loglik,
            projected,
            reseeded,
        });
        if converged && !reseeded {
            break;
        }
        params = next;
    }

    let loglik = mean_loglik(&params, sample)?;
    Ok(EmRun {
        params,
        loglik,
        history,
        restart,
    })
}

/// Weighted covariance around `mean`; unit weights when `weights` is `None`.
pub(crate) fn empirical_covariance(
    sample: &[Vec<f64>],
    mean: &[f64],
    weights: Option<&[f64]>,
) -> Matrix {
    let d = mean.len();
    let mut cov = Matrix::zeros(d);
    let mut total = 0.0;
    for (i, x) in sample.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        total += w;
        for a in 0..d {
            let da = x[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += w * da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// `ln((2πσ1)^{-d/2})`, the log of the largest density any in-range Gaussian
/// can attain.
pub fn ln_p_max(sigma1: f64, d: usize) -> f64 {
    -(d as f64) / 2.0 * (2.0 * std::f64::consts::PI * sigma1).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation2;

    fn one(mean: f64, var: f64, s1: f64, s2: f64) -> GmmParams {
        GmmParams::new(
            vec![1.0],
            vec![vec![mean]],
            vec![Matrix::diag(&[var])],
            s1,
            s2,
        )
        .unwrap()
    }

    #[test]
    fn log_density_examples() {
        let v = log_density(&[0.0], &Matrix::diag(&[1.0]), &[0.0]).unwrap();
        assert!((v + (2.0 * std::f64::consts::PI).sqrt().ln()).abs() < 1e-15);
        assert!((v + 0.918939).abs() < 1e-6);

        let s = 1.0 / (2.0 * std::f64::consts::PI);
        let v = log_density(&[1.0, 2.0], &Matrix::scaled_identity(2, s), &[1.0, 2.0]).unwrap();
        assert!(v.abs() < 1e-14);

        let cov = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let v = log_density(&[0.3, -1.0], &cov, &[0.3, -1.0]).unwrap();
        let det: f64 = 2.0 - 0.25;
        let expect = -0.5 * ((2.0 * std::f64::consts::PI).powi(2) * det).ln();
        assert!((v - expect).abs() < 1e-14);

        assert!(log_density(&[0.0], &Matrix::diag(&[-1.0]), &[0.0]).is_err());
    }

    #[test]
    fn log_density_far_from_mean_does_not_underflow() {
        let v = log_density(&[0.0], &Matrix::diag(&[1e-3]), &[100.0]).unwrap();
        assert!(v.is_finite());
        assert!(v < -1e6);
    }

    #[test]
    fn mixture_cost_examples() {
        let single = one(0.0, 1.0, 0.1, 10.0);
        let ld = log_density(&[0.0], &Matrix::diag(&[1.0]), &[0.7]).unwrap();
        assert!((mixture_cost(&single, &[0.7]).unwrap() - ld).abs() < 1e-15);

        let dup = GmmParams::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![0.0]],
            vec![Matrix::diag(&[1.0]); 2],
            0.1,
            10.0,
        )
        .unwrap();
        assert!((mixture_cost(&dup, &[0.7]).unwrap() - ld).abs() < 1e-14);

        let two = GmmParams::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![10.0]],
            vec![Matrix::diag(&[1.0]); 2],
            0.1,
            10.0,
        )
        .unwrap();
        let p0 = (-0.5 * (2.0 * std::f64::consts::PI).ln()).exp();
        let p10 = (-0.5 * (2.0 * std::f64::consts::PI).ln() - 50.0).exp();
        let expect = (0.5 * p0 + 0.5 * p10).ln();
        let got = mixture_cost(&two, &[0.0]).unwrap();
        assert!((got - expect).abs() < 1e-14);
        assert!((got + 1.612).abs() < 1e-3);

        let zero = GmmParams::new(
            vec![0.0],
            vec![vec![0.0]],
            vec![Matrix::diag(&[1.0])],
            0.1,
            1.0,
        )
        .unwrap();
        assert!(mixture_cost(&zero, &[0.0]).is_err());
    }

    #[test]
    fn mean_loglik_examples() {
        let g = one(0.0, 1.0, 0.1, 10.0);
        let v = mean_loglik(&g, &[vec![0.0]]).unwrap();
        assert!((v - log_density(&[0.0], &Matrix::diag(&[1.0]), &[0.0]).unwrap()).abs() < 1e-15);

        let v = mean_loglik(&g, &[vec![-1.0], vec![1.0]]).unwrap();
        let expect = -(2.0 * std::f64::consts::PI).sqrt().ln() - 0.5;
        assert!((v - expect).abs() < 1e-14);
        assert!((v + 1.41894).abs() < 1e-5);

        let a = mean_loglik(&g, &[vec![0.3], vec![1.2]]).unwrap();
        let b = mean_loglik(&g, &[vec![0.3], vec![1.2], vec![0.3], vec![1.2]]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(mean_loglik(&g, &[]).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let sample = vec![vec![-1.0], vec![1.0]];
        let bad = one(0.0, 0.05, 0.1, 10.0);
        assert!(!is_feasible_mog(&bad, &sample, 1, f64::INFINITY));

        let g = one(0.0, 1.0, 0.1, 10.0);
        let c = mean_loglik(&g, &sample).unwrap();
        assert!(is_feasible_mog(&g, &sample, 1, c));
        assert!(!is_feasible_mog(&g, &sample, 1, c - 1e-9));
        assert!(is_feasible_mog(&g, &sample, 1, f64::INFINITY));
        // budget
        assert!(!is_feasible_mog(&g, &sample, 0, f64::INFINITY));
    }

    #[test]
    fn restrict_examples() {
        let mix = GmmParams::new(
            vec![0.3, 0.7],
            vec![vec![0.0], vec![10.0]],
            vec![Matrix::diag(&[1.0]); 2],
            0.5,
            2.0,
        )
        .unwrap();
        assert_eq!(mix.restrict(&[5.0], 100.0), mix);
        let r = mix.restrict(&[0.0], 5.0);
        assert_eq!(r.weights, vec![0.3]);
        assert_eq!(r.means, vec![vec![0.0]]);
        assert!(mix.restrict(&[3.0], 0.0).is_empty());
    }

    #[test]
    fn restriction_never_increases_density() {
        let mix = GmmParams::new(
            vec![0.2, 0.5, 0.3],
            vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, -4.0]],
            vec![Matrix::identity(2); 3],
            0.5,
            2.0,
        )
        .unwrap();
        let part = mix.restrict(&[0.0, 0.0], 3.5);
        assert_eq!(part.len(), 2);
        for x in [[0.0, 0.0], [1.0, -1.0], [5.0, 5.0], [0.0, -4.0]] {
            assert!(mixture_cost(&part, &x).unwrap() <= mixture_cost(&mix, &x).unwrap());
        }
    }

    #[test]
    fn spectrum_project_examples() {
        let p = spectrum_project(&Matrix::diag(&[0.5, 3.0]), 1.0, 2.0).unwrap();
        assert!(p.sub(&Matrix::diag(&[1.0, 2.0])).max_abs() < 1e-14);

        let inside = Matrix::from_rows(&[vec![1.5, 0.1], vec![0.1, 1.2]]).unwrap();
        assert_eq!(spectrum_project(&inside, 1.0, 2.0).unwrap(), inside);

        let r = rotation2(std::f64::consts::FRAC_PI_4);
        let rotated = r.matmul(&Matrix::diag(&[0.5, 3.0])).matmul(&r.transpose());
        let expect = r.matmul(&Matrix::diag(&[1.0, 2.0])).matmul(&r.transpose());
        let got = spectrum_project(&rotated, 1.0, 2.0).unwrap();
        assert!(got.sub(&expect).max_abs() < 1e-12);

        let nonsym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(spectrum_project(&nonsym, 1.0, 2.0).is_err());
    }

    #[test]
    fn em_k1_closed_form() {
        let sample = vec![vec![-1.0], vec![1.0]];
        let fit = em_fit(&sample, &EmOptions::new(1, 1e-3, 10.0, 5)).unwrap();
        assert!(fit.params.means[0][0].abs() < 1e-12);
        assert!((fit.params.covariances[0][(0, 0)] - 1.0).abs() < 1e-12);
        assert!((fit.params.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn em_k1_projects_sample_covariance() {
        let sample = vec![
            vec![-3.0, 0.0],
            vec![3.0, 0.0],
            vec![0.0, 0.1],
            vec![0.0, -0.1],
        ];
        let fit = em_fit(&sample, &EmOptions::new(1, 0.5, 2.0, 5)).unwrap();
        let mean = crate::moments::sample_mean(&sample).unwrap();
        let cov = empirical_covariance(&sample, &mean, None);
        let expect = spectrum_project(&cov, 0.5, 2.0).unwrap();
        assert!(fit.params.covariances[0].sub(&expect).max_abs() < 1e-12);
        assert!(fit.params.spectrum_ok(1e-9));
    }

    #[test]
    fn em_separates_two_gaussians() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let truth = [[-4.0, 0.0], [4.0, 1.0]];
        let sample: Vec<Vec<f64>> = (0..600)
            .map(|i| {
                let c = truth[i % 2];
                vec![
                    c[0] + Distribution::<f64>::sample(&StandardNormal, &mut rng),
                    c[1] + Distribution::<f64>::sample(&StandardNormal, &mut rng),
                ]
            })
            .collect();
        let mut opts = EmOptions::new(2, 0.25, 4.0, 17);
        opts.restarts = 4;
        let fit = em_fit(&sample, &opts).unwrap();
        for t in truth {
            let best = fit
                .params
                .means
                .iter()
                .map(|m| Norm::L2.dist(m, &t))
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.5, "mean too far from {t:?}: {best}");
        }
        assert!(fit.params.spectrum_ok(1e-9));
    }

    #[test]
    fn em_history_monotone_without_projection() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sample: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let shift = if i % 3 == 0 { 3.0 } else { -1.0 };
                vec![shift + Distribution::<f64>::sample(&StandardNormal, &mut rng)]
            })
            .collect();
        for rule in [CovarianceRule::Clip, CovarianceRule::Discard] {
            let mut opts = EmOptions::new(3, 0.3, 3.0, 3);
            opts.rule = rule;
            for run in em_fit_all(&sample, &opts).unwrap() {
                assert!(run.params.spectrum_ok(1e-9));
                for w in run.history.windows(2) {
                    if !w[0].projected && !w[0].reseeded {
                        assert!(w[1].loglik >= w[0].loglik - 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn em_deterministic() {
        let sample: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64 * 0.37).sin() * 3.0])
            .collect();
        let opts = EmOptions::new(2, 0.1, 5.0, 77);
        let a = em_fit(&sample, &opts).unwrap();
        let b = em_fit(&sample, &opts).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn log_sum_exp_edge_cases() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
