//! Constructive covers together with their size formulas.
//!
//! Every cover reports the formula size (`size_bound`, and its logarithm, which
//! stays finite when the size overflows) and, when the construction fits under
//! an enumeration cap, the explicit elements in canonical lexicographic order.
//!
//! Mixture covers are never enumerated; [`MixtureCover::round`] maps a mixture
//! to its cover element instead.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bregman::BregmanSpec;
use crate::gmm::GmmParams;
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Default enumeration cap.
pub const DEFAULT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Point,
    Covariance,
    MixtureComponent,
}

/// A cover: resolution, formula size, and optionally its elements.
///
/// Point elements are coordinate vectors; covariance elements are `d×d`
/// matrices flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverReport {
    pub tau: f64,
    pub size_bound: f64,
    pub ln_size_bound: f64,
    pub dim: usize,
    pub element_kind: ElementKind,
    pub enumerated: Option<Vec<Vec<f64>>>,
}

impl CoverReport {
    pub fn enumerated_len(&self) -> Option<usize> {
        self.enumerated.as_ref().map(Vec::len)
    }

    /// Index and distance of the closest enumerated element under `dist`.
    pub fn nearest<F>(&self, x: &[f64], dist: F) -> Option<(usize, f64)>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        self.enumerated
            .as_ref()?
            .iter()
            .enumerate()
            .fold(None, |best, (i, e)| {
                let v = dist(x, e);
                match best {
                    Some((_, b)) if b <= v => best,
                    _ => Some((i, v)),
                }
            })
    }

    /// One element per row, canonical order. Errors when nothing was enumerated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let elems = self
            .enumerated
            .as_ref()
            .ok_or_else(|| Error::invalid("cover was not enumerated"))?;
        let mut out = csv::Writer::from_writer(w);
        let width = match self.element_kind {
            ElementKind::Covariance => self.dim * self.dim,
            _ => self.dim,
        };
        let header: Vec<String> = (0..width).map(|i| format!("x{i}")).collect();
        out.write_record(&header)?;
        for e in elems {
            out.write_record(e.iter().map(|v| format!("{v:e}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Axis-aligned lattice of ℓ∞ boxes of half-width `τ/d` covering `[−R, R]^d`.
///
/// Any point of a box is within `τ` of its center in every ℓp norm, `p ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub radius: f64,
    pub dim: usize,
    pub half_width: f64,
    pub per_axis: usize,
}

impl Lattice {
    pub fn new(radius: f64, dim: usize, tau: f64) -> Result<Self> {
        check_pos("R", radius)?;
        check_pos("tau", tau)?;
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        let half_width = tau / dim as f64;
        let per_axis = ((radius * dim as f64 / tau).ceil() as usize).max(1);
        Ok(Self {
            radius,
            dim,
            half_width,
            per_axis,
        })
    }

    fn coord(&self, j: usize) -> f64 {
        -self.radius + self.half_width * (2 * j + 1) as f64
    }

    fn axis_index(&self, v: f64) -> usize {
        let j = ((v + self.radius) / (2.0 * self.half_width)).floor();
        (j.max(0.0) as usize).min(self.per_axis - 1)
    }

    /// Center of the box containing `x` (relative to `origin`), clamped to the grid.
    pub fn snap(&self, x: &[f64], origin: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(origin)
            .map(|(v, o)| o + self.coord(self.axis_index(v - o)))
            .collect()
    }

    fn box_meets_ball(&self, idx: &[usize]) -> bool {
        let h = self.half_width;
        let sq: f64 = idx
            .iter()
            .map(|&j| {
                let c = self.coord(j);
                let near = (c.abs() - h).max(0.0);
                near * near
            })
            .sum();
        sq <= self.radius * self.radius * (1.0 + 1e-12)
    }

    fn enumerate(&self, cap: usize) -> Option<Vec<Vec<f64>>> {
        let total = (self.per_axis as f64).powi(self.dim as i32);
        if total > cap as f64 {
            return None;
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.dim];
        loop {
            if self.box_meets_ball(&idx) {
                out.push(idx.iter().map(|&j| self.coord(j)).collect());
            }
            let mut a = self.dim;
            loop {
                if a == 0 {
                    return Some(out);
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < self.per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
}

/// Cover of the Euclidean `R`-ball in `R^d` at scale `τ`, centered at the origin.
pub fn lp_ball_cover(r: f64, d: usize, tau: f64, cap: usize) -> Result<CoverReport> {
    let lattice = Lattice::new(r, d, tau)?;
    let base = 1.0 + 2.0 * r * d as f64 / tau;
    let ln_size_bound = d as f64 * base.ln();
    Ok(CoverReport {
        tau,
        size_bound: ln_size_bound.exp(),
        ln_size_bound,
        dim: d,
        element_kind: ElementKind::Point,
        enumerated: lattice.enumerate(cap),
    })
}

/// Resolution `min{sqrt(eps/(2r2)), eps/(2(R2+R)r2)}` of a uniform center cover.
pub fn bregman_cover_tau(spec: &BregmanSpec, r: f64, r2: f64, eps: f64) -> Result<f64> {
    check_pos("eps", eps)?;
    if !(r >= 0.0) || !(r2 >= 0.0) {
        return Err(Error::invalid("radii must be nonnegative"));
    }
    let a = (eps / (2.0 * spec.r2)).sqrt();
    let b = eps / (2.0 * (r2 + r) * spec.r2);
    Ok(a.min(b))
}

/// Center cover of the `R2`-ball so that for every center set inside it some
/// tuple of cover elements has hard cost within `eps` on the data `R`-ball.
pub fn bregman_center_cover(
    spec: &BregmanSpec,
    r: f64,
    r2: f64,
    eps: f64,
    d: usize,
    cap: usize,
) -> Result<CoverReport> {
    let tau = bregman_cover_tau(spec, r, r2, eps)?;
    lp_ball_cover(r2, d, tau, cap)
}

/// Cover resolution `min{sqrt(eps/(2r2)), r1·eps/(2r2·R3)}` for clamped costs.
pub fn clamped_cover_tau(spec: &BregmanSpec, r3: f64, eps: f64) -> Result<f64> {
    check_pos("R3", r3)?;
    check_pos("eps", eps)?;
    Ok((eps / (2.0 * spec.r2))
        .sqrt()
        .min(spec.r1 * eps / (2.0 * spec.r2 * r3)))
}

fn ln_add(a: f64, b: f64) -> f64 {
    crate::gmm::log_sum_exp(&[a, b])
}

fn safe_ln(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `ln` of the covariance-cover size formula.
pub fn covariance_cover_ln_size(sigma1: f64, sigma2: f64, eps: f64, d: usize) -> f64 {
    let df = d as f64;
    let orth = df * df * (1.0 + 32.0 * sigma2 / eps).ln();
    let additive = df * (1.0 + (sigma2 - sigma1) / (eps / 2.0)).ln();
    let multiplicative = df * safe_ln((sigma2 / sigma1).ln() / (eps / df));
    orth + ln_add(additive, multiplicative)
}

/// One-dimensional eigenvalue grid: `g₀ = σ1`, `g_{j+1} = min{g_j + eps, g_j·e^{eps/d}}`,
/// ending at `σ2`.
pub fn eigenvalue_grid(sigma1: f64, sigma2: f64, eps: f64, d: usize) -> Vec<f64> {
    let step_add = eps;
    let step_mul = (eps / d as f64).exp();
    let mut g = vec![sigma1];
    let mut cur = sigma1;
    while cur < sigma2 {
        cur = (cur + step_add).min(cur * step_mul).min(sigma2);
        g.push(cur);
    }
    g
}

fn nondecreasing_tuples(grid: &[f64], d: usize) -> Vec<Vec<f64>> {
    fn rec(grid: &[f64], d: usize, start: usize, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for j in start..grid.len() {
            cur.push(grid[j]);
            rec(grid, d, j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(grid, d, 0, &mut Vec::with_capacity(d), &mut out);
    out
}

fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Max-norm grid of `[−1,1]` at spacing `τ` (cell half-width `τ/2`).
fn orth_axis(tau: f64) -> Vec<f64> {
    let n = (2.0 / tau).ceil() as usize;
    (0..n).map(|j| -1.0 + tau * (j as f64 + 0.5)).collect()
}

/// Keeps `M'` iff its polar factor is within max-norm `τ/2`; returns that factor.
fn snap_orthogonal(m: &Matrix, tau: f64) -> Option<Matrix> {
    let o = m.polar_orthogonal()?;
    (o.sub(m).max_abs() <= tau / 2.0 + 1e-15).then_some(o)
}

/// Orthogonal-matrix cover at max-norm scale `τ`, built row by row with pruning
/// that only drops grid matrices which cannot pass the snapping test.
/// `None` when more than `cap` candidates survive.
fn orthogonal_cover(d: usize, tau: f64, cap: usize) -> Option<Vec<Matrix>> {
    let axis = orth_axis(tau);
    let slack = (d as f64).sqrt() * tau / 2.0;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; d];
    'outer: loop {
        let row: Vec<f64> = idx.iter().map(|&j| axis[j]).collect();
        let n = crate::linalg::dot(&row, &row).sqrt();
        if (n - 1.0).abs() <= slack {
            rows.push(row);
            if rows.len() > cap {
                return None;
            }
        }
        let mut a = d;
        loop {
            if a == 0 {
                break 'outer;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axis.len() {
                break;
            }
            idx[a] = 0;
        }
    }
    let inner_tol = 2.0 * slack + slack * slack;
    let mut partial: Vec<Vec<usize>> = (0..rows.len()).map(|i| vec![i]).collect();
    for _ in 1..d {
        let mut next = Vec::new();
        for p in &partial {
            for (j, r) in rows.iter().enumerate() {
                if p.iter()
                    .all(|&i| crate::linalg::dot(&rows[i], r).abs() <= inner_tol)
                {
                    let mut q = p.clone();
                    q.push(j);
                    next.push(q);
                    if next.len() > cap {
                        return None;
                    }
                }
            }
        }
        partial = next;
    }
    let out: Vec<Matrix> = partial
        .par_iter()
        .filter_map(|p| {
            let data: Vec<f64> = p.iter().flat_map(|&i| rows[i].iter().copied()).collect();
            let m = Matrix::from_row_major(d, data).ok()?;
            snap_orthogonal(&m, tau)
        })
        .collect();
    Some(out)
}

/// Covariance cover of `{σ1 I ⪯ A ⪯ σ2 I}` at scale `eps`.
///
/// Elements are `Oᵀ Λ O` with `O` from the snapped orthogonal cover and `Λ`
/// a nondecreasing eigenvalue tuple. The enumeration cap is compared with the
/// number of constructed elements, which is far below the formula size.
pub fn covariance_cover(
    sigma1: f64,
    sigma2: f64,
    eps: f64,
    d: usize,
    cap: usize,
) -> Result<CoverReport> {
    check_spectrum(sigma1, sigma2)?;
    check_pos("eps", eps)?;
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let ln_size_bound = covariance_cover_ln_size(sigma1, sigma2, eps, d);
    let tau = eps / (8.0 * sigma2);
    let grid = eigenvalue_grid(sigma1, sigma2, eps / 2.0, d);
    let n_lambda = binomial(grid.len() + d - 1, d);

    let enumerated = if n_lambda > cap as f64 {
        None
    } else {
        orthogonal_cover(d, tau, cap).and_then(|orth| {
            if orth.len() as f64 * n_lambda > cap as f64 {
                return None;
            }
            let lambdas = nondecreasing_tuples(&grid, d);
            let mut out: Vec<Vec<f64>> = orth
                .par_iter()
                .flat_map_iter(|o| {
                    lambdas.iter().map(move |l| {
                        o.transpose()
                            .matmul(&Matrix::diag(l))
                            .matmul(o)
                            .symmetrize()
                            .into_vec()
                    })
                })
                .collect();
            out.sort_by(|a, b| a.partial_cmp(b).expect("finite entries"));
            Some(out)
        })
    };

    Ok(CoverReport {
        tau: eps,
        size_bound: ln_size_bound.exp(),
        ln_size_bound,
        dim: d,
        element_kind: ElementKind::Covariance,
        enumerated,
    })
}

fn check_spectrum(sigma1: f64, sigma2: f64) -> Result<()> {
    if !(sigma1 > 0.0) || !(sigma2 >= sigma1) || !sigma2.is_finite() {
        return Err(Error::invalid(format!(
            "spectrum bounds must satisfy 0 < sigma1 <= sigma2, got ({sigma1}, {sigma2})"
        )));
    }
    Ok(())
}

/// `ln|A| − ln|B|` for symmetric positive definite matrices.
pub fn log_det_ratio(a: &Matrix, b: &Matrix) -> Option<f64> {
    Some(a.cholesky()?.log_det() - b.cholesky()?.log_det())
}

/// `(ln(|A|/|B|), ‖A − B‖₂)`.
pub fn covariance_match(a: &Matrix, b: &Matrix) -> Option<(f64, f64)> {
    let ratio = log_det_ratio(a, b)?;
    let spec = a.sub(b).symmetrize().spectral_norm_symmetric().ok()?;
    Some((ratio, spec))
}

/// Exhaustive search over an enumerated covariance cover: the element with the
/// smallest spectral distance to `a` among those whose log-determinant ratio is
/// within `eps`. Returns the element and its `(log det ratio, spectral distance)`.
pub fn nearest_covariance(
    report: &CoverReport,
    a: &Matrix,
    eps: f64,
) -> Option<(Matrix, f64, f64)> {
    let elems = report.enumerated.as_ref()?;
    let d = report.dim;
    let ld_a = a.cholesky()?.log_det();
    elems
        .par_iter()
        .filter_map(|e| {
            let b = Matrix::from_row_major(d, e.clone()).ok()?;
            let diff = a.sub(&b);
            // entries bound the spectral norm from below
            if diff.max_abs() > 2.0 * eps {
                return None;
            }
            let ratio = ld_a - b.cholesky()?.log_det();
            if ratio.abs() > eps {
                return None;
            }
            let s = diff.symmetrize().spectral_norm_symmetric().ok()?;
            Some((b, ratio, s))
        })
        .min_by(|x, y| {
            x.2.partial_cmp(&y.2)
                .expect("finite")
                .then_with(|| x.0.as_slice().partial_cmp(y.0.as_slice()).expect("finite"))
        })
}

/// Constructive rounding of `a` to an element of the covariance cover with the
/// same parameters, without enumerating the cover.
///
/// Searches the grid neighbours of the eigenvector matrix of `a` and the two
/// bracketing eigenvalue-grid values per coordinate, keeping candidates that
/// pass the snapping test, and returns the one with the smallest spectral
/// distance among those within the determinant tolerance (falling back to the
/// smallest spectral distance overall).
pub fn round_covariance(a: &Matrix, sigma1: f64, sigma2: f64, eps: f64) -> Result<Matrix> {
    check_spectrum(sigma1, sigma2)?;
    check_pos("eps", eps)?;
    let d = a.dim();
    let eig = a.symmetric_eigen()?;
    let o = eig.vectors.transpose();
    let tau = eps / (8.0 * sigma2);
    let axis = orth_axis(tau);
    let grid = eigenvalue_grid(sigma1, sigma2, eps / 2.0, d);

    // neighbouring grid indices per entry
    let entry_opts: Vec<Vec<usize>> = o
        .as_slice()
        .iter()
        .map(|&v| {
            let j = (((v + 1.0) / tau - 0.5).round().max(0.0) as usize).min(axis.len() - 1);
            let mut c = vec![j];
            if j > 0 {
                c.push(j - 1);
            }
            if j + 1 < axis.len() {
                c.push(j + 1);
            }
            c
        })
        .collect();
    let mut orths = Vec::new();
    let mut pick = vec![0usize; d * d];
    loop {
        let data: Vec<f64> = pick
            .iter()
            .zip(&entry_opts)
            .map(|(&p, opts)| axis[opts[p]])
            .collect();
        if let Some(q) = Matrix::from_row_major(d, data)
            .ok()
            .and_then(|m| snap_orthogonal(&m, tau))
        {
            orths.push(q);
        }
        let mut a_i = d * d;
        let done = loop {
            if a_i == 0 {
                break true;
            }
            a_i -= 1;
            pick[a_i] += 1;
            if pick[a_i] < entry_opts[a_i].len() {
                break false;
            }
            pick[a_i] = 0;
        };
        if done {
            break;
        }
    }
    if orths.is_empty() {
        return Err(Error::Numeric(
            "no orthogonal cover element near eigenbasis".into(),
        ));
    }

    let lam_opts: Vec<Vec<f64>> = eig
        .values
        .iter()
        .map(|&v| {
            let v = v.clamp(sigma1, sigma2);
            let hi = grid.partition_point(|&g| g < v).min(grid.len() - 1);
            let lo = hi.saturating_sub(1);
            if grid[hi] == v || lo == hi {
                vec![grid[hi]]
            } else {
                vec![grid[lo], grid[hi]]
            }
        })
        .collect();
    let mut lambdas = Vec::new();
    let mut pick = vec![0usize; d];
    loop {
        let l: Vec<f64> = pick.iter().zip(&lam_opts).map(|(&p, o)| o[p]).collect();
        if l.windows(2).all(|w| w[0] <= w[1]) {
            lambdas.push(l);
        }
        let mut i = d;
        let done = loop {
            if i == 0 {
                break true;
            }
            i -= 1;
            pick[i] += 1;
            if pick[i] < lam_opts[i].len() {
                break false;
            }
            pick[i] = 0;
        };
        if done {
            break;
        }
    }

    let ld_a = a
        .cholesky()
        .ok_or_else(|| Error::invalid("matrix is not positive definite"))?
        .log_det();
    let mut best: Option<(bool, f64, Matrix)> = None;
    for q in &orths {
        for l in &lambdas {
            let b = q
                .transpose()
                .matmul(&Matrix::diag(l))
                .matmul(q)
                .symmetrize();
            let ok = b
                .cholesky()
                .is_some_and(|c| (ld_a - c.log_det()).abs() <= eps);
            let s = a.sub(&b).symmetrize().spectral_norm_symmetric()?;
            let better = match &best {
                None => true,
                Some((bok, bs, _)) => (ok && !bok) || (ok == *bok && s < *bs),
            };
            if better {
                best = Some((ok, s, b));
            }
        }
    }
    Ok(best.expect("nonempty candidate set").2)
}

/// Scales and size of the partial-mixture cover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureCover {
    pub r: f64,
    pub r2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub c1: f64,
    pub k: usize,
    pub d: usize,
    pub eps: f64,
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau4: f64,
    pub alpha0: f64,
    pub ln_alpha0: f64,
    pub p_min: f64,
    pub ln_p_min: f64,
    pub p_max: f64,
    /// Per-component factor sizes (log): weights, means, precisions.
    pub ln_weight_factor: f64,
    pub ln_mean_factor: f64,
    pub ln_precision_factor: f64,
    pub size_bound: f64,
    pub ln_size_bound: f64,
}

/// Cover of partial mixtures (mass in `[c1, 1]`, means in the `R2`-ball, spectra
/// in `[σ1, σ2]`) agreeing in log-density within `eps` on the `R`-ball.
#[allow(clippy::too_many_arguments)]
pub fn mixture_cover(
    r: f64,
    r2: f64,
    sigma1: f64,
    sigma2: f64,
    c1: f64,
    k: usize,
    eps: f64,
    d: usize,
) -> Result<MixtureCover> {
    check_spectrum(sigma1, sigma2)?;
    check_pos("eps", eps)?;
    check_pos("c1", c1)?;
    if !(r >= 0.0) || !(r2 > 0.0) {
        return Err(Error::invalid("radii must satisfy R >= 0, R2 > 0"));
    }
    if k == 0 || d == 0 {
        return Err(Error::invalid("k and d must be >= 1"));
    }
    let df = d as f64;
    let rr = r + r2;
    let tau0 = (eps / 4.0).exp();
    let tau1 = (eps * sigma1 / (16.0 * rr)).min((eps * sigma1 / 8.0).sqrt());
    let tau2 = eps / (4.0 * rr.powi(2).max(1.0));
    let two_pi = 2.0 * std::f64::consts::PI;
    let ln_p_min = -df / 2.0 * (two_pi * sigma2).ln() - rr * rr / (2.0 * sigma1);
    let p_min = ln_p_min.exp();
    let p_max = (two_pi * sigma1).powf(-df / 2.0);
    // α0 = eps·c1·p_min/(4k(p_max + eps·p_min/2)), in log space since p_min underflows
    let ln_ratio = ln_p_min - crate::gmm::ln_p_max(sigma1, d);
    let ln_alpha0 =
        (eps * c1 / (4.0 * k as f64)).ln() + ln_ratio - (eps * ln_ratio.exp() / 2.0).ln_1p();
    let alpha0 = ln_alpha0.exp();
    let tau4 = alpha0;

    // ln(ln(1/α0)/ln τ0 + (1 − α0)/τ4)
    let ln_weight_factor = ln_add((-ln_alpha0 / tau0.ln()).ln(), (-alpha0).ln_1p() - ln_alpha0);
    let ln_mean_factor = df * (1.0 + 2.0 * r2 * df / tau1).ln();
    let ln_precision_factor = df * df * (1.0 + 32.0 / (sigma1 * tau2)).ln()
        + ln_add(
            df * (1.0 + (1.0 / sigma1 - 1.0 / sigma2) / (tau2 / 2.0)).ln(),
            df * safe_ln((sigma2 / sigma1).ln() / (tau2 / df)),
        );
    let ln_size_bound = k as f64 * (ln_weight_factor + ln_mean_factor + ln_precision_factor);
    Ok(MixtureCover {
        r,
        r2,
        sigma1,
        sigma2,
        c1,
        k,
        d,
        eps,
        tau0,
        tau1,
        tau2,
        tau4,
        alpha0,
        ln_alpha0,
        p_min,
        ln_p_min,
        p_max,
        ln_weight_factor,
        ln_mean_factor,
        ln_precision_factor,
        size_bound: ln_size_bound.exp(),
        ln_size_bound,
    })
}

impl MixtureCover {
    /// Largest value of the weight grid (multiplicative ∪ additive on `[α0, 1]`)
    /// not exceeding `alpha`; `None` below `α0`.
    pub fn round_weight(&self, alpha: f64) -> Option<f64> {
        if alpha < self.alpha0 {
            return None;
        }
        let alpha = alpha.min(1.0);
        let jm = ((alpha / self.alpha0).ln() / self.tau0.ln()).floor();
        let mut mult = self.alpha0 * self.tau0.powf(jm);
        if mult > alpha {
            mult = self.alpha0 * self.tau0.powf(jm - 1.0);
        }
        let ja = ((alpha - self.alpha0) / self.tau4).floor();
        let mut add = self.alpha0 + ja * self.tau4;
        if add > alpha {
            add -= self.tau4;
        }
        Some(mult.max(add).max(self.alpha0))
    }

    /// Maps a partial mixture to its cover element: drops components below
    /// `α0`, rounds weights down on the weight grid, snaps means to the lattice
    /// around `center`, and rounds precisions on the precision cover.
    pub fn round(&self, params: &GmmParams, center: &[f64]) -> Result<GmmParams> {
        let lattice = Lattice::new(self.r2, self.d, self.tau1)?;
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covs = Vec::new();
        for i in 0..params.len() {
            let Some(w) = self.round_weight(params.weights[i]) else {
                continue;
            };
            let eig = params.covariances[i].symmetric_eigen()?;
            let inv: Vec<f64> = eig.values.iter().map(|v| 1.0 / v).collect();
            let precision = eig.reassemble_with(&inv).symmetrize();
            let rounded =
                round_covariance(&precision, 1.0 / self.sigma2, 1.0 / self.sigma1, self.tau2)?;
            let e2 = rounded.symmetric_eigen()?;
            let back: Vec<f64> = e2.values.iter().map(|v| 1.0 / v).collect();
            weights.push(w);
            means.push(lattice.snap(&params.means[i], center));
            covs.push(e2.reassemble_with(&back).symmetrize());
        }
        Ok(GmmParams {
            weights,
            means,
            covariances: covs,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::BregmanSpec;
    use crate::moments::Norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lp_sizes() {
        let c = lp_ball_cover(1.0, 1, 1.0, DEFAULT_CAP).unwrap();
        assert!((c.size_bound - 3.0).abs() < 1e-12);
        let c = lp_ball_cover(1.0, 2, 0.5, DEFAULT_CAP).unwrap();
        assert!((c.size_bound - 81.0).abs() < 1e-9);
        assert!(c.enumerated_len().unwrap() as f64 <= c.size_bound);
    }

    #[test]
    fn lp_single_box() {
        let c = lp_ball_cover(1.0, 1, 2.5, DEFAULT_CAP).unwrap();
        assert!(c.size_bound <= 3.0);
        let e = c.enumerated.as_ref().unwrap();
        assert_eq!(e.len(), 1);
        for x in [-1.0, -0.3, 0.0, 0.9, 1.0] {
            assert!((x - e[0][0]).abs() <= 2.5);
        }
    }

    #[test]
    fn lp_probes_and_snap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (r, d, tau) = (1.5, 2, 0.2);
        let c = lp_ball_cover(r, d, tau, DEFAULT_CAP).unwrap();
        let lat = Lattice::new(r, d, tau).unwrap();
        for _ in 0..500 {
            let x = loop {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-r..r)).collect();
                if Norm::L2.of(&x) <= r {
                    break x;
                }
            };
            let (_, dist) = c.nearest(&x, |a, b| Norm::L2.dist(a, b)).unwrap();
            assert!(dist <= tau);
            let s = lat.snap(&x, &[0.0, 0.0]);
            assert!(Norm::L1.dist(&s, &x) <= tau + 1e-12);
            assert!(c.enumerated.as_ref().unwrap().contains(&s));
        }
    }

    #[test]
    fn lp_cap_and_errors() {
        let c = lp_ball_cover(10.0, 3, 0.01, 1000).unwrap();
        assert!(c.enumerated.is_none());
        assert!(lp_ball_cover(0.0, 1, 1.0, 10).is_err());
        assert!(lp_ball_cover(1.0, 1, -1.0, 10).is_err());
    }

    #[test]
    fn lp_size_monotone() {
        let mut prev = 0.0;
        for r in [0.5, 1.0, 2.0, 4.0] {
            let s = lp_ball_cover(r, 2, 0.3, 0).unwrap().size_bound;
            assert!(s >= prev);
            prev = s;
        }
        let a = lp_ball_cover(1.0, 2, 0.1, 0).unwrap().size_bound;
        let b = lp_ball_cover(1.0, 2, 0.2, 0).unwrap().size_bound;
        assert!(b <= a);
    }

    #[test]
    fn bregman_tau_example() {
        let spec = BregmanSpec::squared_euclidean();
        let t = bregman_cover_tau(&spec, 1.0, 3.0, 0.5).unwrap();
        assert!((t - 0.03125).abs() < 1e-15);
        let big = bregman_cover_tau(&spec, 1.0, 3.0, 1e9).unwrap();
        assert!((big - (1e9f64 / 4.0).sqrt()).abs() < 1e-6 * big);
    }

    #[test]
    fn clamped_tau_examples() {
        let spec = BregmanSpec::squared_euclidean();
        assert!((clamped_cover_tau(&spec, 4.0, 0.5).unwrap() - 0.0625).abs() < 1e-15);
        assert!(clamped_cover_tau(&spec, 1e9, 0.5).unwrap() < 1e-9);
        assert!(
            clamped_cover_tau(&spec, 4.0, 1.0).unwrap()
                >= clamped_cover_tau(&spec, 4.0, 0.5).unwrap()
        );
        assert!(clamped_cover_tau(&spec, 0.0, 0.5).is_err());
    }

    #[test]
    fn eigen_grid_covers() {
        let g = eigenvalue_grid(0.5, 2.0, 0.25, 2);
        assert_eq!(g[0], 0.5);
        assert_eq!(*g.last().unwrap(), 2.0);
        for w in g.windows(2) {
            assert!(w[1] - w[0] <= 0.5 + 1e-12);
            assert!(w[1] / w[0] <= (0.25f64).exp() + 1e-12);
        }
        assert_eq!(eigenvalue_grid(1.0, 1.0, 0.1, 1), vec![1.0]);
    }

    #[test]
    fn covariance_d1_degenerate() {
        let c = covariance_cover(1.0, 1.0, 0.3, 1, DEFAULT_CAP).unwrap();
        let e = c.enumerated.as_ref().unwrap();
        assert!(!e.is_empty());
        assert!(e.iter().all(|v| (v[0] - 1.0).abs() < 1e-12));
        let (_, ratio, dist) = nearest_covariance(&c, &Matrix::diag(&[1.0]), 0.3).unwrap();
        assert!(ratio.abs() < 1e-12 && dist < 1e-12);
    }

    #[test]
    fn covariance_d2_small_probe() {
        let eps = 0.8;
        let c = covariance_cover(0.5, 2.0, eps, 2, DEFAULT_CAP).unwrap();
        let n = c.enumerated_len().unwrap();
        assert!((n as f64) <= c.size_bound);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let l = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
            let r = crate::linalg::rotation2(rng.random_range(0.0..6.3));
            let a = r
                .matmul(&Matrix::diag(&l))
                .matmul(&r.transpose())
                .symmetrize();
            let (_, ratio, dist) = nearest_covariance(&c, &a, eps).unwrap();
            assert!(ratio.abs() <= eps && dist <= eps);
            let b = round_covariance(&a, 0.5, 2.0, eps).unwrap();
            let (ratio, dist) = covariance_match(&a, &b).unwrap();
            assert!(ratio.abs() <= eps && dist <= eps, "{ratio} {dist}");
        }
    }

    #[test]
    fn mixture_scales() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let s = 1.0 / two_pi;
        let m = mixture_cover(1.0, 2.0, s, s, 0.5, 2, 0.5, 1).unwrap();
        assert!((m.p_max - 1.0).abs() < 1e-12);
        assert!(m.alpha0 < 0.5 * 0.5 * m.p_min / (4.0 * 2.0 * m.p_max));
        assert!((m.tau0 - (0.125f64).exp()).abs() < 1e-15);
        assert!((m.tau2 - 0.5 / 36.0).abs() < 1e-15);
        assert!(m.ln_size_bound.is_finite());
    }

    #[test]
    fn weight_rounding() {
        let m = mixture_cover(1.0, 1.0, 0.5, 1.0, 0.5, 1, 0.5, 1).unwrap();
        assert!(m.round_weight(m.alpha0 / 2.0).is_none());
        for a in [m.alpha0, 0.01, 0.3, 0.77, 1.0] {
            let w = m.round_weight(a).unwrap();
            assert!(w <= a + 1e-15);
            assert!(a / w <= m.tau0 + 1e-12);
            assert!(w >= a - m.tau4 - 1e-15);
        }
    }
}
