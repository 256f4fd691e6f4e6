use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CPolicy, CostKind, ExperimentConfig};
use crate::bounds::{bregman_bound, gmm_bound, kmeans_bound, BoundReport};
use crate::bregman::{is_feasible, lloyd_fit_all, mean_cost, BregmanSpec, CenterSet, LloydOptions};
use crate::distributions::{certified_moment, draw_stream, CostModel, EvalSet};
use crate::gmm::{em_fit_all, is_feasible_mog, mean_loglik, EmOptions, GmmParams};
use crate::moments::{sample_mean, MomentProfile};
use crate::{Error, Result};

pub(crate) const EVAL_STREAM: u64 = 0;
const GRID_STRIDE: u64 = 1 << 32;
const PROBE_BASE: u64 = 1 << 62;

pub(crate) fn sample_stream(grid: usize, trial: usize) -> u64 {
    1 + grid as u64 * GRID_STRIDE + trial as u64
}

pub(crate) fn probe_rng(seed: u64, grid: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PROBE_BASE + grid as u64 * GRID_STRIDE + trial as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub m: u64,
    pub c: f64,
    pub probes: usize,
    /// Largest `|Ê_m φ − Ê_eval φ| + 3·se` over the probe family.
    pub deviation: f64,
    pub bound: f64,
    pub margin: f64,
}

impl TrialRecord {
    pub fn dominated(&self) -> bool {
        self.deviation <= self.bound
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub m: u64,
    pub median_dev: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    /// Log-log fit of the median observed deviation.
    pub observed: LineFit,
    /// Log-log fit of the bound formula over the same grid.
    pub formula: LineFit,
    pub rate_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub seed: u64,
}

impl Environment {
    pub(crate) fn new(seed: u64) -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind: String,
    pub config: ExperimentConfig,
    pub profile: MomentProfile,
    pub trials: Vec<TrialRecord>,
    pub dominance_fraction: f64,
    pub required_dominance: f64,
    pub passed: bool,
    /// Bound of the first trial at the largest sample size.
    pub bound: BoundReport,
    pub rate_fit: Option<RateFit>,
    pub environment: Environment,
    pub notes: Vec<String>,
}

/// Least-squares line through `(x, y)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("line fit needs at least two paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("line fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Shared, read-only state of a run.
pub(crate) struct Context {
    pub cfg: ExperimentConfig,
    pub profile: MomentProfile,
    pub eval: EvalSet,
    pub model: Model,
}

pub(crate) enum Model {
    Hard(BregmanSpec),
    Mixture { sigma1: f64, sigma2: f64 },
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let profile = certified_moment(&cfg.distribution, cfg.p)?;
        let model = match cfg.cost {
            CostKind::Kmeans => Model::Hard(BregmanSpec::squared_euclidean()),
            CostKind::Bregman => Model::Hard(cfg.divergence.build()?),
            CostKind::Gmm => {
                let (sigma1, sigma2) = cfg.spectrum()?;
                Model::Mixture { sigma1, sigma2 }
            }
        };
        let eval = EvalSet::draw(&cfg.distribution, cfg.n_eval, cfg.seed, EVAL_STREAM)?;
        Ok(Self {
            cfg: cfg.clone(),
            profile,
            eval,
            model,
        })
    }

    /// `c` for a trial sample.
    pub fn score(&self, sample: &[Vec<f64>]) -> Result<f64> {
        match (self.cfg.c_policy(), &self.model) {
            (CPolicy::Fixed { value }, _) => Ok(value),
            (CPolicy::SampleVariance { factor }, Model::Hard(spec)) => {
                let mean = CenterSet::new(vec![sample_mean(sample)?], 1)?;
                Ok(factor * mean_cost(spec, &mean, sample)?)
            }
            (CPolicy::SampleVariance { .. }, Model::Mixture { .. }) => {
                Err(Error::invalid("mixture runs need a fixed c"))
            }
        }
    }

    pub fn bound(&self, c: f64, m: u64) -> Result<BoundReport> {
        let cfg = &self.cfg;
        let d = self.profile.dim();
        match (&self.model, cfg.cost) {
            (Model::Hard(_), CostKind::Kmeans) => {
                kmeans_bound(self.profile.m, cfg.p, c, d, cfg.k, m, cfg.delta)
            }
            (Model::Hard(spec), _) => bregman_bound(
                &self.profile,
                spec,
                c,
                cfg.eps_policy.eps(cfg.p, m),
                cfg.p_prime(),
                cfg.k,
                m,
                cfg.delta,
            ),
            (Model::Mixture { sigma1, sigma2 }, _) => {
                let eps = match cfg.eps_policy {
                    super::EpsPolicy::Auto => None,
                    super::EpsPolicy::Fixed { value } => Some(value),
                };
                gmm_bound(&self.profile, *sigma1, *sigma2, c, cfg.k, m, cfg.delta, eps)
            }
        }
    }

    /// Checks the theorem floor at `m` before any trial runs, using the
    /// evaluation set as a stand-in sample for data-dependent `c`.
    pub fn check_floor(&self, m: u64) -> Result<BoundReport> {
        let c = self.score(&self.eval.points)?;
        self.bound(c, m)
    }

    pub fn run_trial(
        &self,
        grid: usize,
        trial: usize,
        m: u64,
    ) -> Result<(TrialRecord, BoundReport)> {
        let cfg = &self.cfg;
        let sample = draw_stream(
            &cfg.distribution,
            m as usize,
            cfg.seed,
            sample_stream(grid, trial),
        )?;
        let c = self.score(&sample)?;
        let mut rng = probe_rng(cfg.seed, grid, trial);
        let (probes, deviation) = match &self.model {
            Model::Hard(spec) => {
                let family = hard_probes(cfg, spec, &sample, c, &mut rng)?;
                let mut dev = 0.0_f64;
                for p in &family {
                    let emp = mean_cost(spec, p, &sample)?;
                    let est = self.eval.estimate(CostModel::Hard { spec, centers: p })?;
                    dev = dev.max((emp - est.mean).abs() + 3.0 * est.std_error);
                }
                (family.len(), dev)
            }
            Model::Mixture { sigma1, sigma2 } => {
                let family = mixture_probes(cfg, *sigma1, *sigma2, &sample, c, &mut rng)?;
                let mut dev = 0.0_f64;
                for p in &family {
                    assert!(p.spectrum_ok(1e-9), "probe leaves the spectrum range");
                    let emp = mean_loglik(p, &sample)?;
                    let est = self.eval.estimate(CostModel::Mixture(p))?;
                    dev = dev.max((emp - est.mean).abs() + 3.0 * est.std_error);
                }
                (family.len(), dev)
            }
        };
        let bound = self.bound(c, m)?;
        Ok((
            TrialRecord {
                trial,
                m,
                c,
                probes,
                deviation,
                bound: bound.total,
                margin: bound.total - deviation,
            },
            bound,
        ))
    }

    pub fn run_trials(&self, grid: usize, m: u64) -> Result<(Vec<TrialRecord>, BoundReport)> {
        let results: Vec<(TrialRecord, BoundReport)> = (0..self.cfg.trials)
            .into_par_iter()
            .map(|t| self.run_trial(grid, t, m))
            .collect::<Result<_>>()?;
        let first = results[0].1.clone();
        Ok((results.into_iter().map(|(r, _)| r).collect(), first))
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect()
}

pub(crate) fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, d, 1.0);
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

fn root_spread(sample: &[Vec<f64>]) -> Result<f64> {
    Ok(crate::moments::reference_cost(sample)?.sqrt().max(1e-12))
}

/// Feasible center sets: Lloyd restarts, perturbations of the best run, and
/// `k − 1` fitted centers plus one far center.
pub(crate) fn hard_probes(
    cfg: &ExperimentConfig,
    spec: &BregmanSpec,
    sample: &[Vec<f64>],
    c: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CenterSet>> {
    let pr = &cfg.probes;
    let k = cfg.k;
    let d = sample[0].len();
    let opts = LloydOptions {
        restarts: pr.restarts,
        max_iters: pr.max_iters,
        ..LloydOptions::new(k, rng.random())
    };
    let runs = lloyd_fit_all(spec, sample, &opts)?;
    let best = runs
        .iter()
        .reduce(|b, r| if r.cost < b.cost { r } else { b })
        .expect("at least one restart")
        .centers
        .clone();
    let mut family: Vec<CenterSet> = runs
        .into_iter()
        .map(|r| r.centers)
        .filter(|p| is_feasible(spec, p, sample, c))
        .collect();

    let scale = pr.perturbation_scale * c.abs().sqrt();
    for _ in 0..pr.perturbations {
        let centers = best
            .centers
            .iter()
            .map(|x| {
                let z = gaussian_vec(rng, d, scale);
                x.iter().zip(z).map(|(a, b)| a + b).collect()
            })
            .collect();
        let p = CenterSet::new(centers, k)?;
        if is_feasible(spec, &p, sample, c) {
            family.push(p);
        }
    }

    if k >= 2 && pr.far_centers > 0 {
        let opts = LloydOptions {
            restarts: 1,
            max_iters: pr.max_iters,
            ..LloydOptions::new(k - 1, rng.random())
        };
        let base = lloyd_fit_all(spec, sample, &opts)?.remove(0).centers;
        let anchor = sample_mean(sample)?;
        let spread = root_spread(sample)?;
        for j in 0..pr.far_centers {
            let dist = pr.far_scale * spread * (j + 1) as f64;
            let u = unit_vec(rng, d);
            let far: Vec<f64> = anchor.iter().zip(u).map(|(a, b)| a + dist * b).collect();
            let mut centers = base.centers.clone();
            centers.push(far);
            let p = CenterSet::new(centers, k)?;
            if is_feasible(spec, &p, sample, c) {
                family.push(p);
            }
        }
    }
    if family.is_empty() {
        return Err(Error::invalid(format!(
            "probe family is empty: no fitted center set has mean cost <= c = {c}"
        )));
    }
    Ok(family)
}

/// Feasible mixtures: EM restarts, mean perturbations of the best run, and the
/// best run with one component moved far away.
pub(crate) fn mixture_probes(
    cfg: &ExperimentConfig,
    sigma1: f64,
    sigma2: f64,
    sample: &[Vec<f64>],
    c: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GmmParams>> {
    let pr = &cfg.probes;
    let k = cfg.k;
    let d = sample[0].len();
    let opts = EmOptions {
        restarts: pr.restarts,
        max_iters: pr.max_iters,
        tol: pr.em_tol,
        ..EmOptions::new(k, sigma1, sigma2, rng.random())
    };
    let runs = em_fit_all(sample, &opts)?;
    let best = runs
        .iter()
        .reduce(|b, r| if r.loglik > b.loglik { r } else { b })
        .expect("at least one restart")
        .params
        .clone();
    let mut family: Vec<GmmParams> = runs
        .into_iter()
        .map(|r| r.params)
        .filter(|p| is_feasible_mog(p, sample, k, c))
        .collect();

    let scale = pr.perturbation_scale * if c == 0.0 { 1.0 } else { c.abs().sqrt() };
    for _ in 0..pr.perturbations {
        let mut p = best.clone();
        for mean in p.means.iter_mut() {
            let z = gaussian_vec(rng, d, scale);
            mean.iter_mut().zip(z).for_each(|(a, b)| *a += b);
        }
        if is_feasible_mog(&p, sample, k, c) {
            family.push(p);
        }
    }

    let spread = root_spread(sample)?;
    for j in 0..pr.far_centers {
        let dist = pr.far_scale * spread * (j + 1) as f64;
        let u = unit_vec(rng, d);
        let mut p = best.clone();
        let i = j % p.len();
        p.means[i]
            .iter_mut()
            .zip(u)
            .for_each(|(a, b)| *a += dist * b);
        if is_feasible_mog(&p, sample, k, c) {
            family.push(p);
        }
    }
    if family.is_empty() {
        return Err(Error::invalid(format!(
            "probe family is empty: no fitted mixture has mean log-likelihood <= c = {c}"
        )));
    }
    Ok(family)
}

fn finish(
    kind: &str,
    ctx: &Context,
    trials: Vec<TrialRecord>,
    bound: BoundReport,
    rate_fit: Option<RateFit>,
    mut notes: Vec<String>,
) -> VerificationReport {
    let hits = trials.iter().filter(|t| t.dominated()).count();
    let dominance_fraction = hits as f64 / trials.len() as f64;
    let required_dominance = ctx
        .cfg
        .min_dominance
        .unwrap_or((1.0 - bound.failure_prob).max(0.0));
    notes.push(
        "deviations are maxima over a finite probe family and under-approximate the supremum"
            .to_string(),
    );
    VerificationReport {
        kind: kind.to_string(),
        config: ctx.cfg.clone(),
        profile: ctx.profile.clone(),
        dominance_fraction,
        required_dominance,
        passed: dominance_fraction >= required_dominance,
        trials,
        bound,
        rate_fit,
        environment: Environment::new(ctx.cfg.seed),
        notes,
    }
}

fn verify_single(cfg: &ExperimentConfig, kind: &str) -> Result<VerificationReport> {
    let ctx = Context::new(cfg)?;
    let m = cfg.single_m()?;
    ctx.check_floor(m)?;
    let (trials, bound) = ctx.run_trials(0, m)?;
    log::info!("{kind}: {} trials at m = {m}", trials.len());
    Ok(finish(kind, &ctx, trials, bound, None, Vec::new()))
}

/// Hard-clustering verification (`kmeans` or `bregman` cost).
pub fn verify_kmeans(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    if cfg.cost == CostKind::Gmm {
        return Err(Error::invalid(
            "verify_kmeans needs a kmeans or bregman cost",
        ));
    }
    verify_single(cfg, "verify_kmeans")
}

/// Mixture log-likelihood verification.
pub fn verify_gmm(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    if cfg.cost != CostKind::Gmm {
        return Err(Error::invalid("verify_gmm needs the gmm cost"));
    }
    verify_single(cfg, "verify_gmm")
}

/// Dispatches on the configured cost.
pub fn verify(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    match cfg.cost {
        CostKind::Gmm => verify_gmm(cfg),
        _ => verify_kmeans(cfg),
    }
}

/// Median deviation and bound across an `m`-grid, with log-log slopes of both.
pub fn rate_study(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let grid = cfg
        .m_grid
        .clone()
        .ok_or_else(|| Error::invalid("rate study needs `m_grid`"))?;
    if grid.len() < 3 {
        return Err(Error::invalid(format!(
            "rate study needs at least 3 grid points, got {}",
            grid.len()
        )));
    }
    let ctx = Context::new(cfg)?;
    for &m in &grid {
        ctx.check_floor(m)?;
    }
    let mut all = Vec::new();
    let mut points = Vec::new();
    let mut last_bound = None;
    for (g, &m) in grid.iter().enumerate() {
        let (trials, bound) = ctx.run_trials(g, m)?;
        let devs: Vec<f64> = trials.iter().map(|t| t.deviation).collect();
        let bounds: Vec<f64> = trials.iter().map(|t| t.bound).collect();
        points.push(RatePoint {
            m,
            median_dev: median(&devs),
            bound: median(&bounds),
        });
        all.extend(trials);
        last_bound = Some(bound);
    }
    let bound = last_bound.expect("nonempty grid");
    let mut notes = Vec::new();
    let usable: Vec<&RatePoint> = points.iter().filter(|p| p.median_dev > 0.0).collect();
    if usable.len() < points.len() {
        notes
            .push("grid points with zero median deviation are left out of the observed fit".into());
    }
    let lx = |ps: &[&RatePoint]| ps.iter().map(|p| (p.m as f64).ln()).collect::<Vec<_>>();
    let observed = fit_line(
        &lx(&usable),
        &usable.iter().map(|p| p.median_dev.ln()).collect::<Vec<_>>(),
    )?;
    let all_refs: Vec<&RatePoint> = points.iter().collect();
    let formula = fit_line(
        &lx(&all_refs),
        &points.iter().map(|p| p.bound.ln()).collect::<Vec<_>>(),
    )?;
    let rate_fit = RateFit {
        points,
        observed,
        formula,
        rate_exponent: bound.rate_exponent,
    };
    Ok(finish(
        "rate_study",
        &ctx,
        all,
        bound,
        Some(rate_fit),
        notes,
    ))
}
