//! Moment-based concentration primitives.
//!
//! A [`MomentProfile`] carries a single constant `M` bounding every absolute
//! central moment `E‖X − E X‖^l`, `1 ≤ l ≤ p`. Everything else in the crate
//! derives radii and deviation terms from it.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference norm on ℝᵈ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    L1,
    Linf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::Linf => v.iter().fold(0.0_f64, |a, x| a.max(x.abs())),
        }
    }

    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::Linf => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs())),
        }
    }
}

/// Which point a profile's moments are taken around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterSource {
    /// The exact population mean.
    PopulationMean,
    /// The mean of a finite sample, standing in for the population mean.
    SampleMean,
}

/// Order-`p` moment bound `M` around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    pub p: u32,
    pub m: f64,
    pub norm: Norm,
    pub center: Vec<f64>,
    pub center_source: CenterSource,
}

impl MomentProfile {
    pub fn new(p: u32, m: f64, norm: Norm, center: Vec<f64>) -> Result<Self> {
        let profile = Self {
            p,
            m,
            norm,
            center,
            center_source: CenterSource::PopulationMean,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || !self.p.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "moment order must be even and >= 2, got {}",
                self.p
            )));
        }
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return Err(Error::invalid(format!(
                "moment bound must be finite and nonnegative, got {}",
                self.m
            )));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("profile center has non-finite entries"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// ‖x − center‖ in the profile's norm.
    pub fn offset_norm(&self, x: &[f64]) -> f64 {
        self.norm.dist(x, &self.center)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Clips confidence parameters above one, which leaves every bound valid.
pub(crate) fn clip_delta(delta: f64) -> Result<f64> {
    if !(delta > 0.0) || delta.is_nan() {
        return Err(Error::invalid(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if delta > 1.0 {
        log::warn!("delta = {delta} > 1 clipped to 1");
        return Ok(1.0);
    }
    Ok(delta)
}

/// Radius `(M/eps)^{1/p}` of a ball holding mass at least `1 − eps`.
pub fn ball_radius(profile: &MomentProfile, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if profile.m == 0.0 {
        return Ok(0.0);
    }
    Ok((profile.m / eps).powf(1.0 / profile.p as f64))
}

/// Radius `(M/eps)^{1/(p−k)}` outside of which `∫‖τ‖^k dρ ≤ eps`.
pub fn clip_radius(profile: &MomentProfile, k: u32, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    if k == 0 || k >= profile.p {
        return Err(Error::invalid(format!(
            "clipping exponent must satisfy 0 < k < p = {}, got {k}",
            profile.p
        )));
    }
    if profile.m == 0.0 {
        return Ok(0.0);
    }
    Ok((profile.m / eps).powf(1.0 / (profile.p - k) as f64))
}

/// Output of [`sampled_clip_radius`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledClip {
    pub radius: f64,
    /// Moment bound `2^{p'}·eps` of the clipped variable `‖τ‖^k 1[B^c]`.
    pub m_prime: f64,
    pub p_prime: u32,
}

impl SampledClip {
    /// Empirical-vs-population deviation of the outer-region integral, valid with
    /// probability `1 − δ` for `m ≥ p'/(M'e)`.
    pub fn deviation(&self, m: usize, delta: f64) -> Result<f64> {
        sampled_deviation(self.m_prime, self.p_prime, m, delta)
    }
}

/// Radius and clipped moment bound for controlling `∫_{B^c}‖τ‖^k` on a sample.
///
/// Requires the profile order to reach `p̃ = k(p'+1)`.
pub fn sampled_clip_radius(
    profile: &MomentProfile,
    k: u32,
    p_prime: u32,
    eps: f64,
) -> Result<SampledClip> {
    check_eps(eps)?;
    if k == 0 || p_prime == 0 {
        return Err(Error::invalid("k and p' must be at least 1"));
    }
    let p_tilde = k * (p_prime + 1);
    if profile.p < p_tilde {
        return Err(Error::invalid(format!(
            "profile order {} below required k(p'+1) = {p_tilde}",
            profile.p
        )));
    }
    let radius = if profile.m == 0.0 {
        0.0
    } else {
        (1..=p_prime)
            .map(|i| (profile.m / eps).powf(1.0 / (p_tilde - i * k) as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(SampledClip {
        radius,
        m_prime: 2f64.powi(p_prime as i32) * eps,
        p_prime,
    })
}

/// `sqrt(M'·e·p'/(2m))·(2/δ)^{1/p'}`, requiring `m ≥ p'/(M'e)`.
pub fn sampled_deviation(m_prime: f64, p_prime: u32, m: usize, delta: f64) -> Result<f64> {
    chebyshev_generic(
        m_prime,
        p_prime as f64,
        m,
        delta,
        "outer-region sample size",
    )
}

/// Minimum sample size `p/(M e)` for [`chebyshev_deviation`].
pub fn chebyshev_floor(m_bound: f64, p: u32) -> f64 {
    p as f64 / (m_bound * std::f64::consts::E)
}

/// Deviation `sqrt(M p e / (2m)) (2/δ)^{1/p}` of an empirical mean from its
/// expectation, exceeded with probability at most `δ`.
pub fn chebyshev_deviation(m_bound: f64, p: u32, m: usize, delta: f64) -> Result<f64> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::invalid(format!("p must be even and >= 2, got {p}")));
    }
    chebyshev_generic(m_bound, p as f64, m, delta, "chebyshev sample size")
}

fn chebyshev_generic(m_bound: f64, p: f64, m: usize, delta: f64, what: &str) -> Result<f64> {
    let delta = clip_delta(delta)?;
    if !(m_bound >= 0.0) {
        return Err(Error::invalid("moment bound must be nonnegative"));
    }
    if m_bound == 0.0 {
        return Ok(0.0);
    }
    let floor = p / (m_bound * std::f64::consts::E);
    if (m as f64) < floor {
        return Err(Error::floor(what, floor, m as f64));
    }
    Ok((m_bound * p * std::f64::consts::E / (2.0 * m as f64)).sqrt() * (2.0 / delta).powf(1.0 / p))
}

fn check_sample(sample: &[Vec<f64>]) -> Result<usize> {
    let first = sample
        .first()
        .ok_or_else(|| Error::invalid("sample is empty"))?;
    let d = first.len();
    if sample.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("sample points have inconsistent dimension"));
    }
    Ok(d)
}

pub fn sample_mean(sample: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = check_sample(sample)?;
    let mut mean = vec![0.0; d];
    for x in sample {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    let n = sample.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Empirical moment profile centered at the sample mean: `M` is the largest of
/// the empirical moments `Ê‖x − x̄‖^l`, `l = 1..p`.
pub fn fit_profile(sample: &[Vec<f64>], p: u32, norm: Norm) -> Result<MomentProfile> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::invalid(format!("p must be even and >= 2, got {p}")));
    }
    let center = sample_mean(sample)?;
    let moments = empirical_moments(sample, &center, p, norm);
    let m = moments.iter().cloned().fold(0.0, f64::max);
    Ok(MomentProfile {
        p,
        m,
        norm,
        center,
        center_source: CenterSource::SampleMean,
    })
}

/// `Ê‖x − center‖^l` for `l = 1..=p`.
pub fn empirical_moments(sample: &[Vec<f64>], center: &[f64], p: u32, norm: Norm) -> Vec<f64> {
    let mut sums = vec![0.0; p as usize];
    for x in sample {
        let r = norm.dist(x, center);
        let mut pow = 1.0;
        for s in sums.iter_mut() {
            pow *= r;
            *s += pow;
        }
    }
    let n = sample.len() as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// Single-center k-means cost at the sample mean (trace of the empirical
/// covariance), the default reference score `c`.
pub fn reference_cost(sample: &[Vec<f64>]) -> Result<f64> {
    let mean = sample_mean(sample)?;
    let total: f64 = sample
        .iter()
        .map(|x| crate::linalg::sq_dist(x, &mean))
        .sum();
    Ok(total / sample.len() as f64)
}
