//! Monte Carlo verification experiments.
//!
//! An [`ExperimentConfig`] names a distribution, a cost, and the bound
//! parameters. [`verify_kmeans`] and [`verify_gmm`] estimate the uniform
//! deviation over a probe family of feasible parameters in each trial and
//! compare it to the bound; [`rate_study`] repeats this over a grid of sample
//! sizes; [`audit`] checks the bracket and clamp inequalities directly.
//!
//! The supremum over the feasible class is probed, not computed: the probe
//! family (fitter restarts, random perturbations of the best fit, and
//! configurations with one far-away center) under-approximates it. Population
//! costs are Monte Carlo estimates over one held-out evaluation set, and each
//! reported deviation is inflated by three evaluation standard errors.
//!
//! Every random draw comes from a ChaCha stream fixed by `(seed, stream)`, so
//! reports are byte-identical across reruns and thread counts.

mod audit;
mod config;
mod output;
mod run;

pub use audit::{audit, AuditOutcome, CheckSummary};
pub use config::{
    AuditSettings, CPolicy, CostKind, DivergenceConfig, EpsPolicy, ExperimentConfig, ProbeSettings,
};
pub use output::{
    write_audit_outputs, write_outputs, write_ratefit_csv, write_report_json, write_trials_csv,
};
pub use run::{
    fit_line, median, rate_study, verify, verify_gmm, verify_kmeans, Environment, LineFit, RateFit,
    RatePoint, TrialRecord, VerificationReport,
};

use crate::{Error, Result};

/// Runs `f` on a dedicated pool of `threads` workers (`0` = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
