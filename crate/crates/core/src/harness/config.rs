use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bregman::BregmanSpec;
use crate::distributions::DistributionSpec;
use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Kmeans,
    Bregman,
    Gmm,
}

/// Divergence used by the `bregman` cost; `kmeans` always uses squared Euclidean.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DivergenceConfig {
    #[default]
    SquaredEuclidean,
    QuadraticForm {
        matrix: Vec<Vec<f64>>,
    },
    LogCoshQuadratic,
}

impl DivergenceConfig {
    pub fn build(&self) -> Result<BregmanSpec> {
        match self {
            Self::SquaredEuclidean => Ok(BregmanSpec::squared_euclidean()),
            Self::QuadraticForm { matrix } => {
                BregmanSpec::quadratic_form(Matrix::from_rows(matrix)?)
            }
            Self::LogCoshQuadratic => Ok(BregmanSpec::logcosh_quadratic()),
        }
    }
}

fn one() -> f64 {
    1.0
}

/// How the reference score `c` is chosen in each trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CPolicy {
    Fixed {
        value: f64,
    },
    /// `factor` times the single-center cost at the sample mean.
    SampleVariance {
        #[serde(default = "one")]
        factor: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsPolicy {
    /// `m^{−1/2 + 1/p}`.
    #[default]
    Auto,
    Fixed {
        value: f64,
    },
}

impl EpsPolicy {
    pub fn eps(&self, p: u32, m: u64) -> f64 {
        match self {
            Self::Auto => (m as f64).powf(-0.5 + 1.0 / p as f64),
            Self::Fixed { value } => *value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSettings {
    pub restarts: usize,
    pub perturbations: usize,
    /// Perturbation standard deviation in units of `sqrt(|c|)`.
    pub perturbation_scale: f64,
    pub far_centers: usize,
    /// Far-center distance in units of the sample's root single-center cost.
    pub far_scale: f64,
    pub max_iters: usize,
    /// Relative log-likelihood change at which EM probes stop.
    pub em_tol: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            restarts: 16,
            perturbations: 32,
            perturbation_scale: 0.25,
            far_centers: 8,
            far_scale: 10.0,
            max_iters: 100,
            em_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSettings {
    pub param_sets: usize,
    pub outer_probes: usize,
    pub trials: usize,
    /// Draws per outer-mass estimate.
    pub n_outer: usize,
    pub required_pass: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            param_sets: 50,
            outer_probes: 10_000,
            trials: 100,
            n_outer: 100_000,
            required_pass: 0.95,
        }
    }
}

fn default_trials() -> usize {
    1
}

fn default_n_eval() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub distribution: DistributionSpec,
    pub cost: CostKind,
    #[serde(default)]
    pub divergence: DivergenceConfig,
    pub k: usize,
    pub p: u32,
    /// Clipping order; defaults to `max(1, p/4)`.
    #[serde(default)]
    pub p_prime: Option<u32>,
    /// Defaults to `sample_variance` for hard costs and `fixed 1/2` for mixtures.
    #[serde(default)]
    pub c_policy: Option<CPolicy>,
    pub delta: f64,
    #[serde(default)]
    pub eps_policy: EpsPolicy,
    #[serde(default)]
    pub m: Option<u64>,
    #[serde(default)]
    pub m_grid: Option<Vec<u64>>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub probes: ProbeSettings,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sigma1: Option<f64>,
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// Required dominance fraction; defaults to `1 − failure probability`.
    #[serde(default)]
    pub min_dominance: Option<f64>,
    #[serde(default)]
    pub audit: AuditSettings,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn p_prime(&self) -> u32 {
        self.p_prime.unwrap_or((self.p / 4).max(1))
    }

    pub fn c_policy(&self) -> CPolicy {
        self.c_policy.clone().unwrap_or(match self.cost {
            CostKind::Gmm => CPolicy::Fixed { value: 0.5 },
            _ => CPolicy::SampleVariance { factor: 1.0 },
        })
    }

    pub fn spectrum(&self) -> Result<(f64, f64)> {
        match (self.sigma1, self.sigma2) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::invalid("gmm cost needs sigma1 and sigma2")),
        }
    }

    /// The single sample size used by verification runs.
    pub fn single_m(&self) -> Result<u64> {
        self.m
            .ok_or_else(|| Error::invalid("config needs `m` for a verification run"))
    }

    /// Structural checks; theorem floors are checked when a run starts.
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if self.n_eval < 2 {
            return Err(Error::invalid("n_eval must be >= 2"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.m.is_none() && self.m_grid.is_none() {
            return Err(Error::invalid("config needs `m` or `m_grid`"));
        }
        if matches!(self.m, Some(0)) || self.m_grid.iter().flatten().any(|&m| m == 0) {
            return Err(Error::invalid("sample sizes must be >= 1"));
        }
        let pr = &self.probes;
        if pr.restarts == 0 {
            return Err(Error::invalid(
                "probe family needs at least one fitter restart",
            ));
        }
        if !(pr.perturbation_scale >= 0.0) || !(pr.far_scale >= 0.0) {
            return Err(Error::invalid("probe scales must be nonnegative"));
        }
        if let EpsPolicy::Fixed { value } = self.eps_policy {
            if !(value > 0.0) {
                return Err(Error::invalid(format!("eps must be positive, got {value}")));
            }
        }
        if let Some(md) = self.min_dominance {
            if !(0.0..=1.0).contains(&md) {
                return Err(Error::invalid("min_dominance must lie in [0, 1]"));
            }
        }
        match self.c_policy() {
            CPolicy::Fixed { value } if !value.is_finite() => {
                return Err(Error::invalid("fixed c must be finite"));
            }
            CPolicy::SampleVariance { factor } if !(factor > 0.0) => {
                return Err(Error::invalid("sample-variance factor must be positive"));
            }
            _ => {}
        }
        match self.cost {
            CostKind::Kmeans | CostKind::Bregman => {
                if self.p < 4 || !self.p.is_multiple_of(2) {
                    return Err(Error::invalid(format!(
                        "p must be even and >= 4, got {}",
                        self.p
                    )));
                }
                if self.cost == CostKind::Kmeans && !self.p.is_multiple_of(4) {
                    return Err(Error::invalid(format!(
                        "k-means runs need p a multiple of 4, got {}",
                        self.p
                    )));
                }
                if let CPolicy::Fixed { value } = self.c_policy() {
                    if value < 0.0 {
                        return Err(Error::invalid("c must be nonnegative for hard costs"));
                    }
                }
                self.divergence.build()?;
            }
            CostKind::Gmm => {
                if self.p < 8 || !self.p.is_multiple_of(4) {
                    return Err(Error::invalid(format!(
                        "mixture runs need p >= 8 and a multiple of 4, got {}",
                        self.p
                    )));
                }
                let (s1, s2) = self.spectrum()?;
                if !(s1 > 0.0) || s1 > 1.0 || !(s2 >= s1) {
                    return Err(Error::invalid(format!(
                        "spectrum bounds must satisfy 0 < sigma1 <= min(1, sigma2), got ({s1}, {s2})"
                    )));
                }
                match self.c_policy() {
                    CPolicy::Fixed { value } if value <= 0.5 => {}
                    CPolicy::Fixed { value } => {
                        return Err(Error::invalid(format!(
                            "mixture runs need c <= 1/2, got {value}"
                        )));
                    }
                    CPolicy::SampleVariance { .. } => {
                        return Err(Error::invalid("mixture runs need a fixed c"));
                    }
                }
            }
        }
        Ok(())
    }
}
