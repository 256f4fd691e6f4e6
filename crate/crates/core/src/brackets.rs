//! Outer brackets and clamps.
//!
//! A bracket `(ℓ, u)` dominates every feasible cost outside a ball `B`, so the
//! region beyond `B` can be dropped from uniform deviation arguments at a
//! small price. A clamp replaces the cost by `min{φ(·; P∩C), R}`.

use serde::{Deserialize, Serialize};

use crate::bregman::{hard_cost, BregmanSpec, CenterSet};
use crate::gmm::{ln_p_max, GmmParams};
use crate::moments::{clip_delta, MomentProfile, Norm};
use crate::{Error, Result};

const E: f64 = std::f64::consts::E;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

fn check_p_prime(p: u32, p_prime: u32) -> Result<()> {
    if p_prime < 1 || 2 * (p_prime + 1) > p {
        return Err(Error::invalid(format!(
            "p' must satisfy 1 <= p' <= p/2 - 1, got p' = {p_prime} with p = {p}"
        )));
    }
    Ok(())
}

fn ln_inv(delta: f64) -> f64 {
    (1.0 / delta).ln()
}

/// `(R_B0, R_C0) = ((2M)^{1/p}, (2M)^{1/p} + sqrt(4c/r1))`.
///
/// The ball of radius `R_B0` holds at least half the mass; every center set
/// with average cost at most `c` has a center within `R_C0` of the mean.
pub fn one_center_radii(profile: &MomentProfile, spec: &BregmanSpec, c: f64) -> Result<(f64, f64)> {
    if !(c >= 0.0) {
        return Err(Error::invalid(format!("c must be nonnegative, got {c}")));
    }
    let rb = (2.0 * profile.m).powf(1.0 / profile.p as f64);
    Ok((rb, rb + (4.0 * c / spec.r1).sqrt()))
}

/// Outer bracket for the hard Bregman cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmBracket {
    pub eps: f64,
    pub p_prime: u32,
    pub m_prime: f64,
    pub r_b: f64,
    pub r_c: f64,
    /// Radius of the one-center ball `C₀`.
    pub r_c0: f64,
    pub u_coeff: f64,
    pub eps_rho: f64,
    pub eps_rho_hat: f64,
    pub tau: f64,
    pub center: Vec<f64>,
    pub norm: Norm,
    pub m_floor: f64,
}

impl KmBracket {
    pub fn upper(&self, x: &[f64]) -> f64 {
        let r = self.norm.dist(x, &self.center);
        self.u_coeff * r * r
    }

    pub fn lower(&self, _x: &[f64]) -> f64 {
        0.0
    }

    pub fn in_ball(&self, x: &[f64]) -> bool {
        self.norm.dist(x, &self.center) <= self.r_b
    }
}

/// Builds the k-means outer bracket at scale `eps` with clipping order `p'`.
#[allow(clippy::too_many_arguments)]
pub fn build_km_bracket(
    profile: &MomentProfile,
    spec: &BregmanSpec,
    c: f64,
    eps: f64,
    p_prime: u32,
    m: u64,
    delta: f64,
) -> Result<KmBracket> {
    check_eps(eps)?;
    let delta = clip_delta(delta)?;
    let p = profile.p;
    check_p_prime(p, p_prime)?;
    if profile.m == 0.0 {
        return Err(Error::invalid(
            "moment bound M = 0 describes a point mass; the bracket is degenerate",
        ));
    }
    let m_prime = 2f64.powi(p_prime as i32) * eps;
    let m_floor = (p_prime as f64 / (m_prime * E)).max(9.0 * ln_inv(delta));
    if (m as f64) < m_floor {
        return Err(Error::floor("bracket sample size", m_floor, m as f64));
    }
    let (rb0, rc0) = one_center_radii(profile, spec, c)?;
    let clip = (1..=p_prime)
        .map(|i| (profile.m / eps).powf(1.0 / (p - 2 * i) as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let r_b = rc0.max(clip);
    let r_c = (spec.r2 / spec.r1).sqrt() * (rb0 + (4.0 * c / spec.r1).sqrt() + r_b) + r_b;
    let tau = (eps / (2.0 * spec.r2))
        .sqrt()
        .min(eps / (2.0 * (r_b + r_c) * spec.r2));
    let pp = p_prime as f64;
    let eps_rho_hat =
        eps + (m_prime * E * pp / (2.0 * m as f64)).sqrt() * (2.0 / delta).powf(1.0 / pp);
    Ok(KmBracket {
        eps,
        p_prime,
        m_prime,
        r_b,
        r_c,
        r_c0: rc0,
        u_coeff: 4.0 * spec.r2,
        eps_rho: eps,
        eps_rho_hat,
        tau,
        center: profile.center.clone(),
        norm: profile.norm,
        m_floor,
    })
}

/// Clamp `(C, R)` with `C` the bracket's `R_C`-ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampSpec {
    pub r: f64,
    pub c_radius: f64,
    pub center: Vec<f64>,
    pub norm: Norm,
    pub m_floor: f64,
}

impl ClampSpec {
    /// `min{φ_f(x; P ∩ C), R}`; `R` when no center lies in `C`.
    pub fn clamped_cost(&self, spec: &BregmanSpec, centers: &CenterSet, x: &[f64]) -> Result<f64> {
        let kept = centers.restrict(&self.center, self.c_radius, self.norm);
        if kept.is_empty() {
            return Ok(self.r);
        }
        let (_, v) = spec.assign(&kept, x);
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite divergence".into()));
        }
        Ok(v.min(self.r))
    }
}

/// `R = 2((2M)^{2/p} + R_B²)`, `C` of radius `R_C`.
pub fn clamp_from_bracket(bracket: &KmBracket, profile: &MomentProfile) -> ClampSpec {
    let a = (2.0 * profile.m).powf(2.0 / profile.p as f64);
    ClampSpec {
        r: 2.0 * (a + bracket.r_b * bracket.r_b),
        c_radius: bracket.r_c,
        center: bracket.center.clone(),
        norm: bracket.norm,
        m_floor: bracket.m_floor,
    }
}

/// `R1 = sqrt(2σ2 ln(1/((2πσ1)^{d/2} eps²)))`: any in-range Gaussian whose mean
/// is more than `R + R1` from the center has density below `eps` on the `R`-ball.
/// Zero when the logarithm's argument is at most one.
pub fn gmm_separation_radius(sigma1: f64, sigma2: f64, d: usize, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    check_spectrum(sigma1, sigma2)?;
    let ln_arg = -(d as f64) / 2.0 * (TWO_PI * sigma1).ln() - 2.0 * eps.ln();
    if ln_arg <= 0.0 {
        log::warn!("separation radius degenerate: density bound is already below eps");
        return Ok(0.0);
    }
    Ok((2.0 * sigma2 * ln_arg).sqrt())
}

fn check_spectrum(sigma1: f64, sigma2: f64) -> Result<()> {
    if !(sigma1 > 0.0) || !(sigma2 >= sigma1) || !sigma2.is_finite() {
        return Err(Error::invalid(format!(
            "spectrum bounds must satisfy 0 < sigma1 <= sigma2, got ({sigma1}, {sigma2})"
        )));
    }
    Ok(())
}

/// `(u, R_u) = (ln p_max, (M|ln p_max|/eps)^{1/p})`.
pub fn gmm_upper_bracket(profile: &MomentProfile, sigma1: f64, eps: f64) -> Result<(f64, f64)> {
    check_eps(eps)?;
    if !(sigma1 > 0.0) {
        return Err(Error::invalid("sigma1 must be positive"));
    }
    let u = ln_p_max(sigma1, profile.dim());
    let ru = (profile.m * u.abs() / eps).powf(1.0 / profile.p as f64);
    Ok((u, ru))
}

/// GMM one-center radii `(R3, R4, R5, R6)` with `R6 = max{R3, R4} + R5`.
pub fn gmm_one_center_radii(
    profile: &MomentProfile,
    sigma1: f64,
    sigma2: f64,
    c: f64,
) -> Result<(f64, f64, f64, f64)> {
    check_spectrum(sigma1, sigma2)?;
    if c > 0.5 {
        return Err(Error::invalid(format!("c must be at most 1/2, got {c}")));
    }
    let (r3, r4, r5) = gmm_radii_345(profile, sigma1, sigma2, c)?;
    Ok((r3, r4, r5, r3.max(r4) + r5))
}

fn gmm_radii_345(
    profile: &MomentProfile,
    sigma1: f64,
    sigma2: f64,
    c: f64,
) -> Result<(f64, f64, f64)> {
    let d = profile.dim();
    let lpm = ln_p_max(sigma1, d);
    let p = profile.p as f64;
    let r3 = (2.0 * profile.m * lpm.abs()).powf(1.0 / p);
    let r4 = (2.0 * profile.m).powf(1.0 / p);
    let inner = (8.0 * E).ln() + lpm - 4.0 * c;
    if inner < 0.0 {
        return Err(Error::invalid(
            "ln(8e p_max) - 4c is negative; parameters outside the one-center regime",
        ));
    }
    Ok((r3, r4, (2.0 * sigma2 * inner).sqrt()))
}

/// Outer bracket for the Gaussian-mixture log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmBracket {
    pub sigma1: f64,
    pub sigma2: f64,
    pub c: f64,
    pub eps: f64,
    pub p_prime: u32,
    pub m_prime: f64,
    pub p_max: f64,
    pub ln_p_max: f64,
    pub p_min: f64,
    pub p0: f64,
    pub c_ell: f64,
    pub r1: f64,
    pub r_u: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub r6: f64,
    pub m1: f64,
    pub r_b: f64,
    pub r_c: f64,
    /// Bracket scale as stated for the outer-mass condition.
    pub eps_rho: f64,
    /// Bracket scale as used in the truncation step; used downstream.
    pub eps_rho_used: f64,
    pub eps_rho_hat: f64,
    pub center: Vec<f64>,
    pub m_floor: f64,
}

impl GmmBracket {
    pub fn upper(&self, _x: &[f64]) -> f64 {
        self.ln_p_max
    }

    pub fn lower(&self, x: &[f64]) -> f64 {
        let r = Norm::L2.dist(x, &self.center);
        self.c_ell - 2.0 / self.sigma1 * r * r
    }

    pub fn in_ball(&self, x: &[f64]) -> bool {
        Norm::L2.dist(x, &self.center) <= self.r_b
    }

    /// Membership in the lower-bracket class: means within `R6`, spectra in range,
    /// total mass at least `p0/p_max`.
    pub fn in_lower_class(&self, params: &GmmParams) -> bool {
        let mass_ok = params.total_weight() >= self.p0 / self.p_max * (1.0 - 1e-12);
        mass_ok
            && params
                .means
                .iter()
                .all(|m| Norm::L2.dist(m, &self.center) <= self.r6)
            && params.spectrum_ok(1e-9)
    }
}

/// Builds the Gaussian-mixture outer bracket.
#[allow(clippy::too_many_arguments)]
pub fn build_gmm_bracket(
    profile: &MomentProfile,
    sigma1: f64,
    sigma2: f64,
    c: f64,
    eps: f64,
    p_prime: u32,
    m: u64,
    delta: f64,
) -> Result<GmmBracket> {
    check_spectrum(sigma1, sigma2)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    if sigma1 > 1.0 {
        return Err(Error::invalid(format!(
            "sigma1 must be at most 1, got {sigma1}"
        )));
    }
    if c > 0.5 {
        return Err(Error::invalid(format!("c must be at most 1/2, got {c}")));
    }
    let p = profile.p;
    if p < 4 {
        return Err(Error::invalid(format!("p must be >= 4, got {p}")));
    }
    check_p_prime(p, p_prime)?;
    let delta = clip_delta(delta)?;
    let d = profile.dim();
    let df = d as f64;
    let mm = profile.m;
    let pf = p as f64;
    let pp = p_prime as f64;

    let lpm = ln_p_max(sigma1, d);
    let p_max = lpm.exp();
    let m_prime = 2f64.powi(p_prime as i32) * eps;
    let m_floor = (pp / (m_prime * E))
        .max(8.0 * ln_inv(delta))
        .max(2.0 * lpm * lpm * ln_inv(delta));
    if (m as f64) < m_floor {
        return Err(Error::floor("gmm bracket sample size", m_floor, m as f64));
    }

    let r1 = gmm_separation_radius(sigma1, sigma2, d, eps)?;
    let (_, r_u) = gmm_upper_bracket(profile, sigma1, eps)?;
    let (r3, r4, r5) = gmm_radii_345(profile, sigma1, sigma2, c)?;
    let r6 = r3 + r4 + r5;
    let c_ell = 4.0 * c - (8.0 * E).ln() - lpm - df / 2.0 * (TWO_PI * sigma2).ln();
    let clip = (1..=p_prime)
        .map(|i| mm.powf(1.0 / (pf - 2.0 * i as f64)))
        .fold(f64::NEG_INFINITY, f64::max);
    let m1 = (2.0 * mm * c_ell.abs()).powf(1.0 / pf)
        + (4.0 * mm * sigma1).powf(1.0 / (pf - 2.0))
        + clip
        + (mm * lpm.abs()).powf(1.0 / pf);
    let r_b = r6 + m1 / eps.powf(1.0 / (pf - 2.0 * pp));
    let tail_ln =
        (64.0 * E * E).ln() + df * (TWO_PI * sigma2).ln() - df * TWO_PI.ln() - 4.0 * lpm - 8.0 * c;
    if tail_ln < 0.0 {
        return Err(Error::invalid(
            "negative radicand in R_C; parameters outside bracket regime",
        ));
    }
    let r_c = 1.0
        + r_b * (1.0 + (8.0 * sigma2 / sigma1).sqrt())
        + (4.0 * sigma2 * (1.0 / eps).ln()).sqrt()
        + (2.0 * sigma2 * tail_ln).sqrt();
    let eps_rho_hat = eps
        + (c_ell.abs() + lpm.abs()) * (ln_inv(delta) / (2.0 * m as f64)).sqrt()
        + (m_prime * E * pp / (2.0 * m as f64)).sqrt() * (2.0 / delta).powf(1.0 / pp);
    let rr = r_b + r_c;
    let p_min = (-df / 2.0 * (TWO_PI * sigma2).ln() - rr * rr / (2.0 * sigma1)).exp();
    Ok(GmmBracket {
        sigma1,
        sigma2,
        c,
        eps,
        p_prime,
        m_prime,
        p_max,
        ln_p_max: lpm,
        p_min,
        p0: (4.0 * c).exp() / (8.0 * E),
        c_ell,
        r1,
        r_u,
        r3,
        r4,
        r5,
        r6,
        m1,
        r_b,
        r_c,
        eps_rho: eps,
        eps_rho_used: 2.0 * eps,
        eps_rho_hat,
        center: profile.center.clone(),
        m_floor,
    })
}

/// One failed inequality found by an audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub side: String,
    pub param_index: usize,
    pub point: Vec<f64>,
    pub cost: f64,
    pub bound: f64,
}

/// Result of checking `ℓ ≤ φ ≤ u` on outer points for a family of parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub params_checked: usize,
    /// Parameter sets outside the class the bracket applies to.
    pub params_skipped: usize,
    pub points_checked: usize,
    pub upper_violations: usize,
    pub lower_violations: usize,
    pub min_upper_margin: Option<f64>,
    pub min_lower_margin: Option<f64>,
    pub witnesses: Vec<Witness>,
}

const MAX_WITNESSES: usize = 16;

impl AuditReport {
    pub fn violations(&self) -> usize {
        self.upper_violations + self.lower_violations
    }

    fn record(&mut self, side: &str, idx: usize, x: &[f64], cost: f64, bound: f64) {
        let margin = if side == "upper" {
            bound - cost
        } else {
            cost - bound
        };
        let slot = if side == "upper" {
            &mut self.min_upper_margin
        } else {
            &mut self.min_lower_margin
        };
        *slot = Some(slot.map_or(margin, |m: f64| m.min(margin)));
        if margin < 0.0 {
            if side == "upper" {
                self.upper_violations += 1;
            } else {
                self.lower_violations += 1;
            }
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(Witness {
                    side: side.to_string(),
                    param_index: idx,
                    point: x.to_vec(),
                    cost,
                    bound,
                });
            }
        }
    }

    fn merge(mut self, other: AuditReport) -> AuditReport {
        self.params_checked += other.params_checked;
        self.params_skipped += other.params_skipped;
        self.points_checked += other.points_checked;
        self.upper_violations += other.upper_violations;
        self.lower_violations += other.lower_violations;
        self.min_upper_margin = min_opt(self.min_upper_margin, other.min_upper_margin);
        self.min_lower_margin = min_opt(self.min_lower_margin, other.min_lower_margin);
        for w in other.witnesses {
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(w);
            }
        }
        self
    }
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Checks `0 ≤ φ_f(x; P) ≤ 4r2‖x − center‖²` on points outside `B`.
///
/// Center sets without a center in the one-center ball `C₀` are outside the
/// bracket's class and are skipped. Points inside `B` are ignored.
pub fn audit_km_bracket(
    bracket: &KmBracket,
    spec: &BregmanSpec,
    params: &[CenterSet],
    outer: &[Vec<f64>],
) -> Result<AuditReport> {
    use rayon::prelude::*;
    let parts: Vec<AuditReport> = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| -> Result<AuditReport> {
            let mut rep = AuditReport::default();
            if p.restrict(&bracket.center, bracket.r_c0, bracket.norm)
                .is_empty()
            {
                rep.params_skipped = 1;
                return Ok(rep);
            }
            rep.params_checked = 1;
            for x in outer.iter().filter(|x| !bracket.in_ball(x)) {
                rep.points_checked += 1;
                let v = hard_cost(spec, p, x)?;
                rep.record("upper", i, x, v, bracket.upper(x));
                rep.record("lower", i, x, v, bracket.lower(x));
            }
            Ok(rep)
        })
        .collect::<Result<_>>()?;
    Ok(parts
        .into_iter()
        .fold(AuditReport::default(), AuditReport::merge))
}

/// Checks `mixture_cost ≤ ln p_max` for every in-range mixture and
/// `ℓ ≤ mixture_cost` for members of the lower-bracket class, on points
/// outside `B`.
pub fn audit_gmm_bracket(
    bracket: &GmmBracket,
    params: &[GmmParams],
    outer: &[Vec<f64>],
) -> Result<AuditReport> {
    use rayon::prelude::*;
    let parts: Vec<AuditReport> = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| -> Result<AuditReport> {
            let mut rep = AuditReport::default();
            if !p.spectrum_ok(1e-9) {
                rep.params_skipped = 1;
                return Ok(rep);
            }
            rep.params_checked = 1;
            let lower = bracket.in_lower_class(p);
            let ev = p.evaluator()?;
            for x in outer.iter().filter(|x| !bracket.in_ball(x)) {
                rep.points_checked += 1;
                let v = ev.cost(x);
                // density ratios below 1 can round a hair above p_max
                rep.record("upper", i, x, v, bracket.upper(x) + 1e-12);
                if lower {
                    rep.record("lower", i, x, v, bracket.lower(x));
                }
            }
            Ok(rep)
        })
        .collect::<Result<_>>()?;
    Ok(parts
        .into_iter()
        .fold(AuditReport::default(), AuditReport::merge))
}
