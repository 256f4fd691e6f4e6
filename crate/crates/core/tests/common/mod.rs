//! Independent re-evaluations of the bound formulas, written directly from
//! their closed forms without reusing any crate internals.

#![allow(dead_code)]

pub mod probes;

use std::f64::consts::{E, PI};

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

/// `ln(e^a + e^b)`.
fn lse(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

pub fn kmeans(mm: f64, p: u32, c: f64, d: usize, k: usize, m: f64, delta: f64) -> f64 {
    let p = p as f64;
    let c1 = (2.0 * mm).powf(1.0 / p) + (2.0 * c).sqrt();
    let m1 = mm.powf(1.0 / (p - 2.0)) + mm.powf(2.0 / p);
    let n1 = 2.0 + 576.0 * d as f64 * (c1 + c1.powi(2) + m1 + m1.powi(2));
    let expo = -0.5 + (0.25f64).min(2.0 / p);
    let log_term = ((d * k) as f64 * (m * n1).ln() - delta.ln()) / 2.0;
    let inner = 4.0
        + (72.0 * c1.powi(2) + 32.0 * m1.powi(2)) * log_term.sqrt()
        + (2f64.powf(p / 4.0) * E * p / (8.0 * m.sqrt())).sqrt() * (2.0 / delta).powf(4.0 / p);
    m.powf(expo) * inner
}

pub fn kmeans_floor(p: u32, delta: f64) -> f64 {
    let p = p as f64;
    let a = p / (2f64.powf(p / 4.0 + 2.0) * E);
    (a * a).max(-9.0 * delta.ln())
}

#[derive(Debug, Clone, Copy)]
pub struct KmBracket {
    pub r_b: f64,
    pub r_c: f64,
    pub tau: f64,
    pub eps_rho_hat: f64,
    pub floor: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn km_bracket(
    mm: f64,
    p: u32,
    r1: f64,
    r2: f64,
    c: f64,
    eps: f64,
    pp: u32,
    m: f64,
    delta: f64,
) -> KmBracket {
    let pf = p as f64;
    let base = (2.0 * mm).powf(1.0 / pf);
    let shift = (4.0 * c / r1).sqrt();
    let mut r_b = base + shift;
    for i in 1..=pp {
        r_b = r_b.max((mm / eps).powf(1.0 / (pf - 2.0 * i as f64)));
    }
    let r_c = (r2 / r1).sqrt() * (base + shift + r_b) + r_b;
    let tau = (eps / (2.0 * r2))
        .sqrt()
        .min(eps / (2.0 * (r_b + r_c) * r2));
    let mp = 2f64.powi(pp as i32) * eps;
    let q = pp as f64;
    KmBracket {
        r_b,
        r_c,
        tau,
        eps_rho_hat: eps + (mp * E * q / (2.0 * m)).sqrt() * (2.0 / delta).powf(1.0 / q),
        floor: (q / (mp * E)).max(9.0 * (1.0 / delta).ln()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn bregman(
    mm: f64,
    p: u32,
    d: usize,
    r1: f64,
    r2: f64,
    c: f64,
    eps: f64,
    pp: u32,
    k: usize,
    m: f64,
    delta: f64,
) -> f64 {
    let b = km_bracket(mm, p, r1, r2, c, eps, pp, m, delta);
    let df = d as f64;
    let n_size = (1.0 + 2.0 * b.r_c * df / b.tau).powf(df);
    let log_term = (2.0 * n_size.powi(k as i32) / delta).ln();
    let q = pp as f64;
    4.0 * eps
        + 4.0 * r2 * b.r_c.powi(2) * (log_term / (2.0 * m)).sqrt()
        + (E * 2f64.powf(q) * eps * q / (2.0 * m)).sqrt() * (2.0 / delta).powf(1.0 / q)
}

/// `(R, τ)` of the clamp derived from the bracket.
pub fn clamp_scales(mm: f64, p: u32, r_b: f64, r1: f64, r2: f64, eps: f64) -> (f64, f64) {
    let r = 2.0 * ((2.0 * mm).powf(2.0 / p as f64) + r_b * r_b);
    (r, (eps / (2.0 * r2)).sqrt().min(r1 * eps / (2.0 * r2 * r)))
}

#[allow(clippy::too_many_arguments)]
pub fn clamp(
    r: f64,
    c_radius: f64,
    d: usize,
    r1: f64,
    r2: f64,
    eps: f64,
    eps_rho: f64,
    eps_rho_hat: f64,
    k: usize,
    m: f64,
    delta: f64,
) -> f64 {
    let tau = (eps / (2.0 * r2)).sqrt().min(r1 * eps / (2.0 * r2 * r));
    let df = d as f64;
    let ln_n = df * (1.0 + 2.0 * c_radius * df / tau).ln();
    let log_term = 2f64.ln() + k as f64 * ln_n - delta.ln();
    2.0 * eps + eps_rho + eps_rho_hat + r * r * (log_term / (2.0 * m)).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct GmmBracket {
    pub p_max: f64,
    pub p0: f64,
    pub c_ell: f64,
    pub r_b: f64,
    pub r_c: f64,
    pub eps_rho_hat: f64,
    pub floor: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn gmm_bracket(
    mm: f64,
    p: u32,
    d: usize,
    s1: f64,
    s2: f64,
    c: f64,
    eps: f64,
    pp: u32,
    m: f64,
    delta: f64,
) -> GmmBracket {
    let pf = p as f64;
    let df = d as f64;
    let p_max = (2.0 * PI * s1).powf(-df / 2.0);
    let lpm = p_max.ln();
    let r3 = (2.0 * mm * lpm.abs()).powf(1.0 / pf);
    let r4 = (2.0 * mm).powf(1.0 / pf);
    let r5 = (2.0 * s2 * ((8.0 * E).ln() + lpm - 4.0 * c)).sqrt();
    let r6 = r3 + r4 + r5;
    let c_ell = 4.0 * c - (8.0 * E * p_max).ln() - df / 2.0 * (2.0 * PI * s2).ln();
    let mut clip = 0.0f64;
    for i in 1..=pp {
        clip = clip.max(mm.powf(1.0 / (pf - 2.0 * i as f64)));
    }
    let m1 = (2.0 * mm * c_ell.abs()).powf(1.0 / pf)
        + (4.0 * mm * s1).powf(1.0 / (pf - 2.0))
        + clip
        + (mm * lpm.abs()).powf(1.0 / pf);
    let q = pp as f64;
    let r_b = r6 + m1 / eps.powf(1.0 / (pf - 2.0 * q));
    let r_c = 1.0
        + r_b * (1.0 + (8.0 * s2 / s1).sqrt())
        + (4.0 * s2 * (1.0 / eps).ln()).sqrt()
        + (2.0
            * s2
            * ((64.0 * E * E).ln() + df * (2.0 * PI * s2).ln()
                - df * (2.0 * PI).ln()
                - 4.0 * lpm
                - 8.0 * c))
            .sqrt();
    let mp = 2f64.powf(q) * eps;
    let ln_inv = -delta.ln();
    GmmBracket {
        p_max,
        p0: (4.0 * c).exp() / (8.0 * E),
        c_ell,
        r_b,
        r_c,
        eps_rho_hat: eps
            + (c_ell.abs() + lpm.abs()) * (ln_inv / (2.0 * m)).sqrt()
            + (mp * E * q / (2.0 * m)).sqrt() * (2.0 / delta).powf(1.0 / q),
        floor: (q / (mp * E))
            .max(8.0 * ln_inv)
            .max(2.0 * lpm * lpm * ln_inv),
    }
}

/// `(ln p_min, ln|N|)` of the partial-mixture cover.
#[allow(clippy::too_many_arguments)]
pub fn mixture_cover_ln(
    r: f64,
    r2: f64,
    s1: f64,
    s2: f64,
    c1: f64,
    k: usize,
    eps: f64,
    d: usize,
) -> (f64, f64) {
    let df = d as f64;
    let rr = r + r2;
    let ln_tau0 = eps / 4.0;
    let tau1 = (eps * s1 / (16.0 * rr)).min((eps * s1 / 8.0).sqrt());
    let tau2 = eps / (4.0 * (rr * rr).max(1.0));
    let ln_p_min = -df / 2.0 * (2.0 * PI * s2).ln() - rr * rr / (2.0 * s1);
    let ln_p_max = -df / 2.0 * (2.0 * PI * s1).ln();
    // ln(p_max + eps p_min / 2)
    let ln_den = lse(ln_p_max, (eps / 2.0).ln() + ln_p_min);
    let ln_a0 = (eps * c1).ln() + ln_p_min - (4.0 * k as f64).ln() - ln_den;
    let a0 = ln_a0.exp();
    // ln(ln(1/α0)/ln τ0 + (1 − α0)/α0)
    let ln_w = lse((-ln_a0 / ln_tau0).ln(), (1.0 - a0).ln() - ln_a0);
    let ln_mean = df * (1.0 + 2.0 * r2 * df / tau1).ln();
    let gap = 1.0 / s1 - 1.0 / s2;
    let add = df * (1.0 + gap / (tau2 / 2.0)).ln();
    let ratio = (s2 / s1).ln() / (tau2 / df);
    let mul = if ratio > 0.0 {
        df * ratio.ln()
    } else {
        f64::NEG_INFINITY
    };
    let ln_prec = df * df * (1.0 + 32.0 / (s1 * tau2)).ln() + lse(add, mul);
    (ln_p_min, k as f64 * (ln_w + ln_mean + ln_prec))
}

#[allow(clippy::too_many_arguments)]
pub fn gmm(
    mm: f64,
    p: u32,
    d: usize,
    s1: f64,
    s2: f64,
    c: f64,
    k: usize,
    m: f64,
    delta: f64,
    eps: Option<f64>,
) -> f64 {
    let eps = eps.unwrap_or_else(|| m.powf(-0.5 + 1.0 / p as f64));
    let b = gmm_bracket(mm, p, d, s1, s2, c, eps, p / 4, m, delta);
    let (ln_p_min, ln_n) = mixture_cover_ln(b.r_b, b.r_c, s1, s2, b.p0 / b.p_max, k, eps, d);
    let prefactor = (2.0 * b.p_max * b.p_max / b.p0).ln() - ln_p_min;
    let log_term = 2f64.ln() + ln_n - delta.ln();
    4.0 * eps + prefactor * (log_term / (2.0 * m)).sqrt() + 2.0 * eps + b.eps_rho_hat
}

pub fn gmm_floor(p: u32, d: usize, s2: f64, delta: f64) -> f64 {
    let ln_inv = -delta.ln();
    kmeans_floor(p, 1.0)
        .max(8.0 * ln_inv)
        .max((d * d) as f64 * (PI * s2).ln().powi(2) * ln_inv)
}
