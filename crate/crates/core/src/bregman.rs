//! Bregman divergences, the hard clustering cost and a Lloyd fitter.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, sq_dist, Matrix};
use crate::moments::Norm;
use crate::{Error, Result};

/// A differentiable convex function on ℝᵈ.
pub trait ConvexFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Closed-form divergence, when one is cheaper or more accurate than the
    /// definition.
    fn divergence(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let _ = (x, y);
        None
    }

    fn name(&self) -> String;
}

/// `f(x) = ‖x‖²`, whose divergence is the squared Euclidean distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredEuclidean;

impl ConvexFunction for SquaredEuclidean {
    fn value(&self, x: &[f64]) -> f64 {
        dot(x, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 2.0 * v).collect()
    }

    fn divergence(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        Some(sq_dist(x, y))
    }

    fn name(&self) -> String {
        "squared_euclidean".into()
    }
}

/// `f(x) = xᵀAx` for symmetric positive definite `A`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    a: Matrix,
}

impl QuadraticForm {
    pub fn new(a: Matrix) -> Result<Self> {
        if !a.is_symmetric(1e-12) {
            return Err(Error::invalid("quadratic form matrix must be symmetric"));
        }
        if a.cholesky().is_none() {
            return Err(Error::invalid(
                "quadratic form matrix must be positive definite",
            ));
        }
        Ok(Self { a: a.symmetrize() })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }
}

impl ConvexFunction for QuadraticForm {
    fn value(&self, x: &[f64]) -> f64 {
        self.a.quad_form(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x).into_iter().map(|v| 2.0 * v).collect()
    }

    fn divergence(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Some(self.a.quad_form(&diff))
    }

    fn name(&self) -> String {
        "quadratic_form".into()
    }
}

/// `f(x) = ‖x‖² + Σ ln cosh(xᵢ)`. Its Hessian is `2I + diag(sech²)`, so the
/// divergence is not a quadratic form; used to exercise the generic path.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogCoshQuadratic;

impl ConvexFunction for LogCoshQuadratic {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v + log_cosh(*v)).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 2.0 * v + v.tanh()).collect()
    }

    fn name(&self) -> String {
        "logcosh_quadratic".into()
    }
}

fn log_cosh(v: f64) -> f64 {
    let a = v.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Convex function together with its certified strong-convexity modulus `r1`
/// and gradient-Lipschitz constant `r2` with respect to `norm`.
#[derive(Clone)]
pub struct BregmanSpec {
    f: Arc<dyn ConvexFunction>,
    pub r1: f64,
    pub r2: f64,
    pub norm: Norm,
}

impl fmt::Debug for BregmanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BregmanSpec")
            .field("f", &self.f.name())
            .field("r1", &self.r1)
            .field("r2", &self.r2)
            .field("norm", &self.norm)
            .finish()
    }
}

impl BregmanSpec {
    /// User-supplied function; the caller certifies `r1` and `r2`.
    pub fn custom(f: Arc<dyn ConvexFunction>, r1: f64, r2: f64, norm: Norm) -> Result<Self> {
        if !(r1 > 0.0) || !(r2 >= r1) || !r2.is_finite() {
            return Err(Error::invalid(format!(
                "convexity constants must satisfy 0 < r1 <= r2, got r1={r1}, r2={r2}"
            )));
        }
        Ok(Self { f, r1, r2, norm })
    }

    /// `‖x−y‖₂²` with `r1 = r2 = 2`.
    pub fn squared_euclidean() -> Self {
        Self {
            f: Arc::new(SquaredEuclidean),
            r1: 2.0,
            r2: 2.0,
            norm: Norm::L2,
        }
    }

    /// `(x−y)ᵀA(x−y)` with `r1 = 2λ_min(A)`, `r2 = 2λ_max(A)`.
    pub fn quadratic_form(a: Matrix) -> Result<Self> {
        let q = QuadraticForm::new(a)?;
        let e = q.matrix().symmetric_eigen()?;
        let lo = e.values[0];
        let hi = *e.values.last().unwrap();
        Self::custom(Arc::new(q), 2.0 * lo, 2.0 * hi, Norm::L2)
    }

    /// `‖x‖² + Σ ln cosh(xᵢ)` with `r1 = 2`, `r2 = 3`.
    pub fn logcosh_quadratic() -> Self {
        Self {
            f: Arc::new(LogCoshQuadratic),
            r1: 2.0,
            r2: 3.0,
            norm: Norm::L2,
        }
    }

    pub fn name(&self) -> String {
        self.f.name()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.f.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.f.gradient(x)
    }

    /// `f(x) − f(y) − ⟨∇f(y), x−y⟩`, evaluated straight from the definition.
    pub fn divergence_by_definition(&self, x: &[f64], y: &[f64]) -> f64 {
        let g = self.f.gradient(y);
        let inner: f64 = g
            .iter()
            .zip(x.iter().zip(y))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        self.f.value(x) - self.f.value(y) - inner
    }

    pub fn divergence(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let v = self
            .f
            .divergence(x, y)
            .unwrap_or_else(|| self.divergence_by_definition(x, y));
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite divergence {v}")));
        }
        // rounding can leave tiny negatives on the generic path
        Ok(v.max(0.0))
    }

    fn divergence_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.f
            .divergence(x, y)
            .unwrap_or_else(|| self.divergence_by_definition(x, y))
            .max(0.0)
    }

    /// Hard cost and index of the closest center (lowest index on ties).
    pub fn assign(&self, centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in centers.iter().enumerate() {
            let v = self.divergence_unchecked(x, c);
            if v < best.1 {
                best = (i, v);
            }
        }
        best
    }
}

/// At most `k` centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    pub centers: Vec<Vec<f64>>,
    pub k: usize,
}

impl CenterSet {
    pub fn new(centers: Vec<Vec<f64>>, k: usize) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::invalid("center set is empty"));
        }
        if centers.len() > k {
            return Err(Error::invalid(format!(
                "{} centers exceed budget k = {k}",
                centers.len()
            )));
        }
        let d = centers[0].len();
        if centers.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("centers have inconsistent dimension"));
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("center has non-finite entries"));
        }
        Ok(Self { centers, k })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    /// Centers within `radius` of `center` (the `P ∩ C` restriction). May be empty.
    pub fn restrict(&self, center: &[f64], radius: f64, norm: Norm) -> Vec<Vec<f64>> {
        self.centers
            .iter()
            .filter(|c| norm.dist(c, center) <= radius)
            .cloned()
            .collect()
    }
}

/// `min_{p∈P} B_f(x, p)`.
pub fn hard_cost(spec: &BregmanSpec, centers: &CenterSet, x: &[f64]) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::invalid("center set is empty"));
    }
    let mut best = f64::INFINITY;
    for c in &centers.centers {
        best = best.min(spec.divergence(x, c)?);
    }
    Ok(best)
}

/// Mean hard cost over a sample.
pub fn mean_cost(spec: &BregmanSpec, centers: &CenterSet, sample: &[Vec<f64>]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::invalid("sample is empty"));
    }
    mean_cost_of(spec, &centers.centers, sample)
}

pub(crate) fn mean_cost_of(
    spec: &BregmanSpec,
    centers: &[Vec<f64>],
    sample: &[Vec<f64>],
) -> Result<f64> {
    let total: f64 = sample.iter().map(|x| spec.assign(centers, x).1).sum();
    let v = total / sample.len() as f64;
    if !v.is_finite() {
        return Err(Error::Numeric("non-finite mean cost".into()));
    }
    Ok(v)
}

/// Membership in `H_f(ρ̂; c, k)`: at most `k` centers with mean cost `≤ c`.
pub fn is_feasible(spec: &BregmanSpec, centers: &CenterSet, sample: &[Vec<f64>], c: f64) -> bool {
    if centers.is_empty() || centers.len() > centers.k {
        return false;
    }
    matches!(mean_cost(spec, centers, sample), Ok(v) if v <= c)
}

/// Result of one Lloyd run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LloydRun {
    pub centers: CenterSet,
    pub cost: f64,
    /// Mean cost after each assignment step.
    pub history: Vec<f64>,
    pub restart: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LloydOptions {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub tol: f64,
}

impl LloydOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            restarts: 8,
            max_iters: 100,
            seed,
            tol: 1e-12,
        }
    }
}

/// Best of `restarts` Lloyd runs (lowest cost, ties to the lowest restart index).
pub fn lloyd_fit(
    spec: &BregmanSpec,
    sample: &[Vec<f64>],
    k: usize,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<LloydRun> {
    let opts = LloydOptions {
        restarts,
        max_iters,
        ..LloydOptions::new(k, seed)
    };
    let runs = lloyd_fit_all(spec, sample, &opts)?;
    Ok(best_run(runs))
}

pub(crate) fn best_run(runs: Vec<LloydRun>) -> LloydRun {
    runs.into_iter()
        .reduce(|best, r| if r.cost < best.cost { r } else { best })
        .expect("at least one restart")
}

/// Every restart's result, in restart order.
pub fn lloyd_fit_all(
    spec: &BregmanSpec,
    sample: &[Vec<f64>],
    opts: &LloydOptions,
) -> Result<Vec<LloydRun>> {
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
    let d = sample[0].len();
    if sample.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("sample points have inconsistent dimension"));
    }
    let restarts = opts.restarts.max(1);
    (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            lloyd_single(spec, sample, opts, &mut rng, r)
        })
        .collect()
}

fn lloyd_single(
    spec: &BregmanSpec,
    sample: &[Vec<f64>],
    opts: &LloydOptions,
    rng: &mut ChaCha8Rng,
    restart: usize,
) -> Result<LloydRun> {
    let k = opts.k;
    let d = sample[0].len();
    let mut centers = seed_centers(spec, sample, k, rng);
    let mut assignment = vec![usize::MAX; sample.len()];
    let mut costs = vec![0.0; sample.len()];
    let mut history = Vec::new();

    for _ in 0..opts.max_iters.max(1) {
        let mut changed = false;
        for (i, x) in sample.iter().enumerate() {
            let (j, c) = spec.assign(&centers, x);
            if assignment[i] != j {
                changed = true;
                assignment[i] = j;
            }
            costs[i] = c;
        }
        let cost = costs.iter().sum::<f64>() / sample.len() as f64;
        let converged = !changed
            || history
                .last()
                .is_some_and(|prev: &f64| prev - cost <= opts.tol * prev.abs().max(1.0));
        history.push(cost);
        if converged {
            break;
        }

        // Mean update: the arithmetic mean minimizes Σ B_f(x_i, y) over y for every
        // Bregman divergence.
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (x, &j) in sample.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                // reseed at the currently worst-served point
                let (worst, _) =
                    costs
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |acc, (i, &c)| {
                                if c > acc.1 {
                                    (i, c)
                                } else {
                                    acc
                                }
                            },
                        );
                centers[j] = sample[worst].clone();
                costs[worst] = 0.0;
            }
        }
    }

    let cost = *history.last().unwrap();
    Ok(LloydRun {
        centers: CenterSet { centers, k },
        cost,
        history,
        restart,
    })
}

/// Distance-weighted seeding on `B_f`.
fn seed_centers(
    spec: &BregmanSpec,
    sample: &[Vec<f64>],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let n = sample.len();
    let mut centers = vec![sample[rng.random_range(0..n)].clone()];
    let mut weights: Vec<f64> = sample
        .iter()
        .map(|x| spec.divergence_unchecked(x, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = weights.iter().sum();
        let idx = if total > 0.0 && total.is_finite() {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = sample[idx].clone();
        for (w, x) in weights.iter_mut().zip(sample) {
            *w = w.min(spec.divergence_unchecked(x, &c));
        }
        centers.push(c);
    }
    centers
}
