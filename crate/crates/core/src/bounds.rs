//! Assembled deviation bounds.
//!
//! Each calculator returns a [`BoundReport`] whose `total` is the sum of its
//! named terms, together with the failure probability, the rate exponent in
//! `m`, and the minimum sample size for which the bound is valid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::brackets::{build_gmm_bracket, build_km_bracket, ClampSpec};
use crate::bregman::BregmanSpec;
use crate::covers::{clamped_cover_tau, mixture_cover};
use crate::moments::{clip_delta, MomentProfile};
use crate::{Error, Result};

const E: f64 = std::f64::consts::E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: String,
    pub total: f64,
    pub terms: Vec<BoundTerm>,
    pub failure_prob: f64,
    pub rate_exponent: f64,
    pub m_floor: f64,
    pub inputs: BTreeMap<String, Value>,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn new(
        kind: &str,
        terms: Vec<(&str, f64)>,
        failure_prob: f64,
        rate_exponent: f64,
        m_floor: f64,
    ) -> Self {
        let terms: Vec<BoundTerm> = terms
            .into_iter()
            .map(|(n, v)| BoundTerm {
                name: n.to_string(),
                value: v,
            })
            .collect();
        Self {
            kind: kind.to_string(),
            total: terms.iter().map(|t| t.value).sum(),
            terms,
            failure_prob: failure_prob.min(1.0),
            rate_exponent,
            m_floor,
            inputs: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn input(mut self, name: &str, v: impl Into<Value>) -> Self {
        self.inputs.insert(name.to_string(), v.into());
        self
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }

    /// Plain-text table, one term per line.
    pub fn render_table(&self) -> String {
        let width = self
            .terms
            .iter()
            .map(|t| t.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = format!("{} bound\n", self.kind);
        for t in &self.terms {
            s.push_str(&format!("  {:<width$}  {:.6e}\n", t.name, t.value));
        }
        s.push_str(&format!("  {:<width$}  {:.6e}\n", "total", self.total));
        s.push_str(&format!("  failure probability {}\n", self.failure_prob));
        s.push_str(&format!("  rate exponent {}\n", self.rate_exponent));
        s.push_str(&format!("  minimum m {:.3}\n", self.m_floor));
        for n in &self.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
        s
    }
}

fn check_m(m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("m must be >= 1"));
    }
    Ok(m as f64)
}

fn check_multiple_of_4(p: u32, min: u32) -> Result<()> {
    if p < min || !p.is_multiple_of(4) {
        return Err(Error::invalid(format!(
            "p must be a multiple of 4 and at least {min}, got {p}"
        )));
    }
    Ok(())
}

/// `(p/(2^{p/4+2} e))²`, the tail-term sample floor shared by the k-means and
/// GMM bounds.
pub fn tail_floor(p: u32) -> f64 {
    let pf = p as f64;
    (pf / (2f64.powf(pf / 4.0 + 2.0) * E)).powi(2)
}

/// `min{−1/4, −1/2 + 2/p}`.
pub fn rate_exponent_kmeans(p: u32) -> Result<f64> {
    if p < 4 {
        return Err(Error::invalid(format!("p must be >= 4, got {p}")));
    }
    Ok(rate_exponent_kmeans_real(p as f64))
}

/// [`rate_exponent_kmeans`] for real-valued `p`.
pub fn rate_exponent_kmeans_real(p: f64) -> f64 {
    (-0.25f64).min(-0.5 + 2.0 / p)
}

/// `−1/2 + 3/p`.
pub fn rate_exponent_gmm(p: u32) -> Result<f64> {
    if p < 4 {
        return Err(Error::invalid(format!("p must be >= 4, got {p}")));
    }
    Ok(-0.5 + 3.0 / p as f64)
}

/// `p = 4 ln(2/δ) / ln ln(2/δ)`, the order at which the tail factor
/// `(2/δ)^{4/p}` equals `ln(2/δ)`.
pub fn crossover_p(delta: f64) -> Result<f64> {
    if !(delta > 0.0) || 2.0 / delta <= E {
        return Err(Error::invalid(
            "crossover needs ln ln(2/δ) > 0, i.e. δ < 2/e",
        ));
    }
    let l = (2.0 / delta).ln();
    Ok(4.0 * l / l.ln())
}

/// `(2/δ)^{4/p}` for real `p`.
pub fn tail_factor(p: f64, delta: f64) -> f64 {
    (2.0 / delta).powf(4.0 / p)
}

/// Explicit k-means bound, valid with probability `1 − 3δ`.
pub fn kmeans_bound(
    mm: f64,
    p: u32,
    c: f64,
    d: usize,
    k: usize,
    m: u64,
    delta: f64,
) -> Result<BoundReport> {
    check_multiple_of_4(p, 4)?;
    if !(mm > 0.0) || !mm.is_finite() {
        return Err(Error::invalid(format!("M must be positive, got {mm}")));
    }
    if !(c >= 0.0) {
        return Err(Error::invalid(format!("c must be nonnegative, got {c}")));
    }
    if d == 0 || k == 0 {
        return Err(Error::invalid("d and k must be >= 1"));
    }
    let delta = clip_delta(delta)?;
    let mf = check_m(m)?;
    let pf = p as f64;
    let floor = tail_floor(p).max(9.0 * (1.0 / delta).ln());
    if mf < floor {
        return Err(Error::floor("k-means sample size", floor, mf));
    }
    let c1 = (2.0 * mm).powf(1.0 / pf) + (2.0 * c).sqrt();
    let m1 = mm.powf(1.0 / (pf - 2.0)) + mm.powf(2.0 / pf);
    let n1 = 2.0 + 576.0 * d as f64 * (c1 + c1 * c1 + m1 + m1 * m1);
    let rate = rate_exponent_kmeans(p)?;
    let scale = mf.powf(rate);
    let ln_arg = (d * k) as f64 * (mf * n1).ln() + (1.0 / delta).ln();
    let fluct = (72.0 * c1 * c1 + 32.0 * m1 * m1) * (0.5 * ln_arg).sqrt();
    let tail =
        (2f64.powf(pf / 4.0) * E * pf / (8.0 * mf.sqrt())).sqrt() * (2.0 / delta).powf(4.0 / pf);
    Ok(BoundReport::new(
        "kmeans",
        vec![
            ("outer_bracket", 4.0 * scale),
            ("cover_fluctuation", fluct * scale),
            ("tail", tail * scale),
        ],
        3.0 * delta,
        rate,
        floor,
    )
    .input("M", mm)
    .input("p", p)
    .input("c", c)
    .input("d", d)
    .input("k", k)
    .input("m", m)
    .input("delta", delta)
    .input("c1", c1)
    .input("M1", m1)
    .input("N1", n1))
}

/// `ln` of the uniform center-cover size `(1 + 2 R_C d/τ)^d`.
pub fn ln_center_cover_size(r_c: f64, d: usize, tau: f64) -> f64 {
    d as f64 * (1.0 + 2.0 * r_c * d as f64 / tau).ln()
}

/// General Bregman bound, valid with probability `1 − 3δ`.
#[allow(clippy::too_many_arguments)]
pub fn bregman_bound(
    profile: &MomentProfile,
    spec: &BregmanSpec,
    c: f64,
    eps: f64,
    p_prime: u32,
    k: usize,
    m: u64,
    delta: f64,
) -> Result<BoundReport> {
    if profile.p < 4 {
        return Err(Error::invalid(format!("p must be >= 4, got {}", profile.p)));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mf = check_m(m)?;
    let delta = clip_delta(delta)?;
    let b = build_km_bracket(profile, spec, c, eps, p_prime, m, delta)?;
    let d = profile.dim();
    let ln_n = ln_center_cover_size(b.r_c, d, b.tau);
    let ln_arg = 2f64.ln() + k as f64 * ln_n + (1.0 / delta).ln();
    let fluct = 4.0 * spec.r2 * b.r_c * b.r_c * (ln_arg / (2.0 * mf)).sqrt();
    let pp = p_prime as f64;
    let tail = (E * 2f64.powf(pp) * eps * pp / (2.0 * mf)).sqrt() * (2.0 / delta).powf(1.0 / pp);
    Ok(BoundReport::new(
        "bregman",
        vec![
            ("outer_bracket", 4.0 * eps),
            ("cover_fluctuation", fluct),
            ("tail", tail),
        ],
        3.0 * delta,
        -0.5,
        b.m_floor,
    )
    .input("M", profile.m)
    .input("p", profile.p)
    .input("divergence", spec.name())
    .input("r1", spec.r1)
    .input("r2", spec.r2)
    .input("c", c)
    .input("eps", eps)
    .input("p_prime", p_prime)
    .input("k", k)
    .input("d", d)
    .input("m", m)
    .input("delta", delta)
    .input("R_B", b.r_b)
    .input("R_C", b.r_c)
    .input("tau", b.tau)
    .input("ln_cover_size", ln_n)
    .note("rate exponent refers to the fluctuation and tail terms at fixed eps"))
}

/// Clamp bound, valid with probability `1 − δ`.
#[allow(clippy::too_many_arguments)]
pub fn clamp_bound(
    clamp: &ClampSpec,
    spec: &BregmanSpec,
    eps: f64,
    eps_rho: f64,
    eps_rho_hat: f64,
    k: usize,
    m: u64,
    delta: f64,
) -> Result<BoundReport> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if !(eps >= 0.0) || !(eps_rho >= 0.0) || !(eps_rho_hat >= 0.0) {
        return Err(Error::invalid("scales must be nonnegative"));
    }
    let mf = check_m(m)?;
    let delta = clip_delta(delta)?;
    let d = clamp.center.len();
    // zero eps leaves only the fluctuation term; any positive τ then works
    let tau_eps = if eps > 0.0 { eps } else { 1.0 };
    let tau = clamped_cover_tau(spec, clamp.r, tau_eps)?;
    let ln_n = ln_center_cover_size(clamp.c_radius, d, tau);
    let ln_arg = 2f64.ln() + k as f64 * ln_n + (1.0 / delta).ln();
    let fluct = clamp.r * clamp.r * (ln_arg / (2.0 * mf)).sqrt();
    Ok(BoundReport::new(
        "clamp",
        vec![
            ("cover_scale", 2.0 * eps),
            ("clamp_population", eps_rho),
            ("clamp_sample", eps_rho_hat),
            ("cover_fluctuation", fluct),
        ],
        delta,
        -0.5,
        clamp.m_floor,
    )
    .input("R", clamp.r)
    .input("C_radius", clamp.c_radius)
    .input("r1", spec.r1)
    .input("r2", spec.r2)
    .input("eps", eps)
    .input("eps_rho", eps_rho)
    .input("eps_rho_hat", eps_rho_hat)
    .input("k", k)
    .input("d", d)
    .input("m", m)
    .input("delta", delta)
    .input("tau", tau)
    .input("ln_cover_size", ln_n)
    .note("rate exponent refers to the fluctuation term at fixed scales"))
}

/// Default GMM scale `m^{−1/2 + 1/p}`.
pub fn gmm_default_eps(p: u32, m: u64) -> f64 {
    (m as f64).powf(-0.5 + 1.0 / p as f64)
}

/// Gaussian-mixture bound, valid with probability `1 − 5δ`.
///
/// `eps` defaults to `m^{−1/2 + 1/p}` when `None`.
#[allow(clippy::too_many_arguments)]
pub fn gmm_bound(
    profile: &MomentProfile,
    sigma1: f64,
    sigma2: f64,
    c: f64,
    k: usize,
    m: u64,
    delta: f64,
    eps: Option<f64>,
) -> Result<BoundReport> {
    let p = profile.p;
    check_multiple_of_4(p, 8)?;
    if c > 0.5 {
        return Err(Error::invalid(format!("c must be at most 1/2, got {c}")));
    }
    if !(sigma1 > 0.0) || sigma1 > 1.0 || !(sigma2 >= sigma1) {
        return Err(Error::invalid(format!(
            "spectrum bounds must satisfy 0 < sigma1 <= min(1, sigma2), got ({sigma1}, {sigma2})"
        )));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let mf = check_m(m)?;
    let delta = clip_delta(delta)?;
    let d = profile.dim();
    let df = d as f64;
    let ln_inv = (1.0 / delta).ln();
    let stated_floor = tail_floor(p)
        .max(8.0 * ln_inv)
        .max(df * df * (std::f64::consts::PI * sigma2).ln().powi(2) * ln_inv);
    if mf < stated_floor {
        return Err(Error::floor("gmm sample size", stated_floor, mf));
    }
    let eps = eps.unwrap_or_else(|| gmm_default_eps(p, m));
    let p_prime = p / 4;
    let b = build_gmm_bracket(profile, sigma1, sigma2, c, eps, p_prime, m, delta)?;
    let c1 = b.p0 / b.p_max;
    let cover = mixture_cover(b.r_b, b.r_c, sigma1, sigma2, c1, k, eps, d)?;
    // ln(2 p_max² / (p_min p0)) in log space
    let ln_ratio = 2f64.ln() + 2.0 * b.ln_p_max - cover.ln_p_min - b.p0.ln();
    let ln_arg = 2f64.ln() + cover.ln_size_bound + ln_inv;
    let fluct = ln_ratio * (ln_arg / (2.0 * mf)).sqrt();
    let rate = rate_exponent_gmm(p)?;
    Ok(BoundReport::new(
        "gmm",
        vec![
            ("cover_scale", 4.0 * eps),
            ("cover_fluctuation", fluct),
            ("outer_bracket_population", b.eps_rho_used),
            ("outer_bracket_sample", b.eps_rho_hat),
        ],
        5.0 * delta,
        rate,
        stated_floor.max(b.m_floor),
    )
    .input("M", profile.m)
    .input("p", p)
    .input("sigma1", sigma1)
    .input("sigma2", sigma2)
    .input("c", c)
    .input("k", k)
    .input("d", d)
    .input("m", m)
    .input("delta", delta)
    .input("eps", eps)
    .input("p_prime", p_prime)
    .input("R_B", b.r_b)
    .input("R_C", b.r_c)
    .input("p_max", b.p_max)
    .input("ln_p_min", cover.ln_p_min)
    .input("p0", b.p0)
    .input("c_ell", b.c_ell)
    .input("ln_cover_size", cover.ln_size_bound)
    .input(
        "bracket",
        json!({
            "eps_rho_stated": b.eps_rho,
            "eps_rho_used": b.eps_rho_used,
        }),
    )
    .note("outer-bracket population term uses 2·eps; the outer-mass condition is stated at eps"))
}
