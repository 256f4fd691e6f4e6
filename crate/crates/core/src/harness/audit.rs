use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CostKind, EpsPolicy, ExperimentConfig};
use super::run::{
    hard_probes, mixture_probes, probe_rng, sample_stream, unit_vec, Context, Environment, Model,
};
use crate::brackets::{
    audit_gmm_bracket, audit_km_bracket, build_gmm_bracket, build_km_bracket, clamp_from_bracket,
    AuditReport, ClampSpec, GmmBracket, KmBracket,
};
use crate::bregman::{BregmanSpec, CenterSet};
use crate::distributions::{draw_stream, mean_and_se};
use crate::gmm::GmmParams;
use crate::moments::Norm;
use crate::Result;

const AUDIT_BASE: u64 = 1 << 61;

/// Pass counts of one Monte Carlo check across resampled trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub trials: usize,
    pub passed: usize,
    pub pass_fraction: f64,
    pub required: f64,
    pub ok: bool,
    pub min_margin: f64,
    pub median_margin: f64,
}

impl CheckSummary {
    fn new(name: &str, margins: &[f64], required: f64) -> Self {
        let passed = margins.iter().filter(|m| **m >= 0.0).count();
        let pass_fraction = passed as f64 / margins.len().max(1) as f64;
        Self {
            name: name.to_string(),
            trials: margins.len(),
            passed,
            pass_fraction,
            required,
            ok: pass_fraction >= required,
            min_margin: margins.iter().cloned().fold(f64::INFINITY, f64::min),
            median_margin: super::median(margins),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub kind: String,
    pub config: ExperimentConfig,
    pub m: u64,
    pub c: f64,
    pub eps: f64,
    pub bracket: serde_json::Value,
    pub clamp: Option<ClampSpec>,
    pub dominance: AuditReport,
    pub checks: Vec<CheckSummary>,
    pub passed: bool,
    pub environment: Environment,
}

/// Points outside the bracket ball: radii `R_B(1 + 3U)` in uniform directions.
fn outer_points(rng: &mut ChaCha8Rng, center: &[f64], r_b: f64, n: usize) -> Vec<Vec<f64>> {
    let d = center.len();
    (0..n)
        .map(|_| {
            let r = r_b * (1.0 + 1e-9 + 3.0 * rng.random::<f64>());
            let u = unit_vec(rng, d);
            center.iter().zip(u).map(|(c, v)| c + r * v).collect()
        })
        .collect()
}

/// Bracket dominance on outer probes plus the outer-mass, truncation and
/// (for hard costs) clamp-property checks over resampled trials.
pub fn audit(cfg: &ExperimentConfig) -> Result<AuditOutcome> {
    let ctx = Context::new(cfg)?;
    let m = cfg.single_m()?;
    let sample = draw_stream(&cfg.distribution, m as usize, cfg.seed, sample_stream(0, 0))?;
    let c = ctx.score(&sample)?;
    let mut rng = probe_rng(cfg.seed, 0, 0);
    let set = &cfg.audit;
    match &ctx.model {
        Model::Hard(spec) => {
            let eps = cfg.eps_policy.eps(cfg.p, m);
            let bracket =
                build_km_bracket(&ctx.profile, spec, c, eps, cfg.p_prime(), m, cfg.delta)?;
            let clamp = clamp_from_bracket(&bracket, &ctx.profile);
            let mut params = hard_probes(cfg, spec, &sample, c, &mut rng)?;
            params.truncate(set.param_sets);
            let outer = outer_points(&mut rng, &bracket.center, bracket.r_b, set.outer_probes);
            let dominance = audit_km_bracket(&bracket, spec, &params, &outer)?;
            let margins: Vec<[f64; 3]> = (0..set.trials)
                .into_par_iter()
                .map(|t| hard_trial(&ctx, spec, &bracket, &clamp, &params, m, t))
                .collect::<Result<_>>()?;
            let checks = vec![
                CheckSummary::new("outer_mass", &col(&margins, 0), set.required_pass),
                CheckSummary::new("truncation", &col(&margins, 1), set.required_pass),
                CheckSummary::new("clamp", &col(&margins, 2), set.required_pass),
            ];
            Ok(outcome(
                cfg,
                m,
                c,
                eps,
                serde_json::to_value(&bracket)?,
                Some(clamp),
                dominance,
                checks,
            ))
        }
        Model::Mixture { sigma1, sigma2 } => {
            let eps = match cfg.eps_policy {
                EpsPolicy::Auto => crate::bounds::gmm_default_eps(cfg.p, m),
                EpsPolicy::Fixed { value } => value,
            };
            let bracket = build_gmm_bracket(
                &ctx.profile,
                *sigma1,
                *sigma2,
                c,
                eps,
                cfg.p / 4,
                m,
                cfg.delta,
            )?;
            let mut params = mixture_probes(cfg, *sigma1, *sigma2, &sample, c, &mut rng)?;
            params.truncate(set.param_sets);
            let outer = outer_points(&mut rng, &bracket.center, bracket.r_b, set.outer_probes);
            let dominance = audit_gmm_bracket(&bracket, &params, &outer)?;
            let margins: Vec<[f64; 3]> = (0..set.trials)
                .into_par_iter()
                .map(|t| mixture_trial(&ctx, &bracket, &params, m, t))
                .collect::<Result<_>>()?;
            let checks = vec![
                CheckSummary::new("outer_mass", &col(&margins, 0), set.required_pass),
                CheckSummary::new("truncation", &col(&margins, 1), set.required_pass),
            ];
            Ok(outcome(
                cfg,
                m,
                c,
                eps,
                serde_json::to_value(&bracket)?,
                None,
                dominance,
                checks,
            ))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn outcome(
    cfg: &ExperimentConfig,
    m: u64,
    c: f64,
    eps: f64,
    bracket: serde_json::Value,
    clamp: Option<ClampSpec>,
    dominance: AuditReport,
    checks: Vec<CheckSummary>,
) -> AuditOutcome {
    let passed = dominance.violations() == 0 && checks.iter().all(|ch| ch.ok);
    AuditOutcome {
        kind: match cfg.cost {
            CostKind::Gmm => "audit_gmm",
            _ => "audit_km",
        }
        .to_string(),
        config: cfg.clone(),
        m,
        c,
        eps,
        bracket,
        clamp,
        dominance,
        checks,
        passed,
        environment: Environment::new(cfg.seed),
    }
}

fn col(rows: &[[f64; 3]], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i]).collect()
}

fn audit_streams(t: usize) -> (u64, u64) {
    (AUDIT_BASE + 2 * t as u64, AUDIT_BASE + 2 * t as u64 + 1)
}

/// Margins `[outer mass, truncation, clamp]` for one resampled trial.
fn hard_trial(
    ctx: &Context,
    spec: &BregmanSpec,
    bracket: &KmBracket,
    clamp: &ClampSpec,
    params: &[CenterSet],
    m: u64,
    t: usize,
) -> Result<[f64; 3]> {
    let cfg = &ctx.cfg;
    let (s_outer, s_held) = audit_streams(t);
    let draws = draw_stream(&cfg.distribution, cfg.audit.n_outer, cfg.seed, s_outer)?;
    let vals: Vec<f64> = draws
        .iter()
        .map(|x| {
            if bracket.in_ball(x) {
                0.0
            } else {
                bracket.upper(x)
            }
        })
        .collect();
    let est = mean_and_se(&vals);
    let outer = bracket.eps_rho + 3.0 * est.std_error - est.mean;

    let held = draw_stream(&cfg.distribution, m as usize, cfg.seed, s_held)?;
    let n = held.len() as f64;
    let mut trunc = f64::INFINITY;
    let mut clamped = f64::INFINITY;
    for p in params {
        let kept = p.restrict(&bracket.center, bracket.r_c, bracket.norm);
        let mut full = 0.0;
        let mut inner = 0.0;
        let mut clip = 0.0;
        for x in &held {
            full += spec.assign(&p.centers, x).1;
            let restricted = if kept.is_empty() {
                f64::INFINITY
            } else {
                spec.assign(&kept, x).1
            };
            if bracket.in_ball(x) {
                inner += restricted;
            }
            clip += restricted.min(clamp.r);
        }
        trunc = trunc.min(bracket.eps_rho_hat - ((full - inner) / n).abs());
        clamped = clamped.min(bracket.eps_rho_hat - ((full - clip) / n).abs());
    }
    Ok([outer, trunc, clamped])
}

/// Margins `[outer mass, truncation, unused]` for one resampled trial.
fn mixture_trial(
    ctx: &Context,
    bracket: &GmmBracket,
    params: &[GmmParams],
    m: u64,
    t: usize,
) -> Result<[f64; 3]> {
    let cfg = &ctx.cfg;
    let (s_outer, s_held) = audit_streams(t);
    let draws = draw_stream(&cfg.distribution, cfg.audit.n_outer, cfg.seed, s_outer)?;
    let vals: Vec<f64> = draws
        .iter()
        .map(|x| {
            if bracket.in_ball(x) {
                0.0
            } else {
                bracket.upper(x).abs() + bracket.lower(x).abs()
            }
        })
        .collect();
    let est = mean_and_se(&vals);
    let outer = bracket.eps_rho + 3.0 * est.std_error - est.mean;

    let held = draw_stream(&cfg.distribution, m as usize, cfg.seed, s_held)?;
    let n = held.len() as f64;
    let mut trunc = f64::INFINITY;
    for p in params {
        let ev = p.evaluator()?;
        let kept = p.restrict(&bracket.center, bracket.r_c);
        let kev = kept.evaluator()?;
        let mut full = 0.0;
        let mut inner = 0.0;
        for x in &held {
            full += ev.cost(x);
            if Norm::L2.dist(x, &bracket.center) <= bracket.r_b {
                inner += kev.cost(x);
            }
        }
        let gap = ((full - inner) / n).abs();
        let gap = if gap.is_nan() { f64::INFINITY } else { gap };
        trunc = trunc.min(bracket.eps_rho_hat - gap);
    }
    Ok([outer, trunc, f64::NAN])
}
