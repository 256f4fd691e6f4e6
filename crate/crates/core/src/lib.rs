//! Finite-sample uniform deviation bounds for hard (Bregman / k-means) clustering
//! cost and bounded-spectrum Gaussian-mixture log-likelihood under moment
//! assumptions only.
//!
//! The crate is organized bottom-up:
//!
//! - [`moments`]: moment profiles, ball and clipping radii, moment-based
//!   concentration of empirical means.
//! - [`bregman`]: Bregman divergences with certified convexity constants, the
//!   hard clustering cost, and a Lloyd fitter.
//! - [`gmm`]: Gaussian mixture log-likelihood, restriction of mixtures to balls,
//!   spectrum projection and a spectrum-constrained EM fitter.
//! - [`covers`]: constructive covers with their size formulas.
//! - [`brackets`]: outer brackets and clamps, plus audits of their defining
//!   inequalities.
//! - [`bounds`]: assembled deviation bounds with a per-term breakdown.
//! - [`distributions`]: seeded samplers with certified moment profiles.
//! - [`harness`]: Monte Carlo verification experiments and report output.

// negated float comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod brackets;
pub mod bregman;
pub mod covers;
pub mod distributions;
mod error;
pub mod gmm;
pub mod harness;
pub mod linalg;
pub mod moments;

pub use error::{Error, Result};
