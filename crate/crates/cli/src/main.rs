use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use devbound::bounds::{self, BoundReport};
use devbound::brackets::{build_gmm_bracket, build_km_bracket, clamp_from_bracket};
use devbound::bregman::{lloyd_fit, BregmanSpec};
use devbound::covers::{covariance_cover, lp_ball_cover, mixture_cover, DEFAULT_CAP};
use devbound::distributions::{certified_moment, draw_stream, EvalSet};
use devbound::gmm::{em_fit, EmOptions};
use devbound::harness::{self, CPolicy, CostKind, EpsPolicy, ExperimentConfig, VerificationReport};
use devbound::moments::{reference_cost, MomentProfile, Norm};
use devbound::Error;

#[derive(Parser)]
#[command(
    name = "devbound",
    version,
    about = "Uniform deviation bounds for clustering costs"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a deviation bound.
    Bound {
        #[command(subcommand)]
        kind: BoundKind,
    },
    /// Build an outer bracket.
    Bracket {
        #[command(subcommand)]
        kind: BracketKind,
    },
    /// Build a cover.
    Cover {
        #[command(subcommand)]
        kind: CoverKind,
    },
    /// Fit a model to a sample drawn from the configured distribution.
    Fit {
        #[command(subcommand)]
        kind: FitKind,
    },
    /// Monte Carlo verification of a bound.
    Verify {
        #[command(subcommand)]
        kind: VerifyKind,
    },
    /// Rate study over the config's m-grid.
    Rates,
    /// Bracket, truncation and clamp audit.
    Audit,
}

#[derive(Subcommand)]
enum BoundKind {
    Kmeans(Params),
    Bregman(Params),
    Clamp(Params),
    Gmm(Params),
}

#[derive(Subcommand)]
enum BracketKind {
    Km(Params),
    Gmm(Params),
}

#[derive(Subcommand)]
enum FitKind {
    Lloyd,
    Em,
}

#[derive(Subcommand)]
enum VerifyKind {
    Kmeans,
    Gmm,
}

#[derive(Subcommand)]
enum CoverKind {
    /// Lattice cover of the Euclidean ball.
    Lp {
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Cover of covariances with spectrum in [sigma1, sigma2].
    Cov {
        #[arg(long)]
        sigma1: f64,
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Scales and size of the mixture-parameter cover.
    Mixture {
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        radius2: f64,
        #[arg(long)]
        sigma1: f64,
        #[arg(long)]
        sigma2: f64,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        dim: usize,
    },
}

/// Bound inputs; anything not given is taken from `--config`.
#[derive(Args, Clone, Default)]
struct Params {
    /// Moment bound M.
    #[arg(long = "moment")]
    moment: Option<f64>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    p_prime: Option<u32>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// squared-euclidean or log-cosh-quadratic.
    #[arg(long)]
    divergence: Option<String>,
}

enum Failure {
    Error(Error),
    Dominance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "error"
    } else {
        "warn"
    }))
    .init();
    let threads = cli.threads;
    let result = harness::with_threads(threads, || run(&cli)).unwrap_or_else(|e| Err(e.into()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Dominance) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Precondition { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, Error> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(Some(cfg))
}

fn require_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    load_config(cli)?.ok_or_else(|| Error::InvalidArgument("this command needs --config".into()))
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Bound { kind } => {
            let cfg = load_config(cli)?;
            let report = match kind {
                BoundKind::Kmeans(a) => kmeans(&Resolved::new(a, cfg.as_ref())?)?,
                BoundKind::Bregman(a) => bregman(&Resolved::new(a, cfg.as_ref())?)?,
                BoundKind::Clamp(a) => clamp(&Resolved::new(a, cfg.as_ref())?)?,
                BoundKind::Gmm(a) => gmm(&Resolved::new(a, cfg.as_ref())?)?,
            };
            emit_bound(cli, &report)
        }
        Command::Bracket { kind } => {
            let cfg = load_config(cli)?;
            let value = match kind {
                BracketKind::Km(a) => {
                    let r = Resolved::new(a, cfg.as_ref())?;
                    let spec = r.spec()?;
                    let profile = r.profile()?;
                    let b = build_km_bracket(
                        &profile,
                        &spec,
                        r.c()?,
                        r.eps()?,
                        r.p_prime()?,
                        r.m()?,
                        r.delta()?,
                    )?;
                    let clamp = clamp_from_bracket(&b, &profile);
                    json!({ "bracket": b, "clamp": clamp })
                }
                BracketKind::Gmm(a) => {
                    let r = Resolved::new(a, cfg.as_ref())?;
                    let profile = r.profile()?;
                    let p = r.p()?;
                    let eps = match r.params.eps {
                        Some(e) => e,
                        None => bounds::gmm_default_eps(p, r.m()?),
                    };
                    let b = build_gmm_bracket(
                        &profile,
                        r.sigma1()?,
                        r.sigma2()?,
                        r.c()?,
                        eps,
                        p / 4,
                        r.m()?,
                        r.delta()?,
                    )?;
                    json!({ "bracket": b })
                }
            };
            emit_json(cli, &value, "bracket.json")
        }
        Command::Cover { kind } => cover(cli, kind),
        Command::Fit { kind } => {
            let cfg = require_config(cli)?;
            let m = cfg.single_m()?;
            let sample = draw_stream(&cfg.distribution, m as usize, cfg.seed, 1)?;
            let value = match kind {
                FitKind::Lloyd => {
                    let spec = match cfg.cost {
                        CostKind::Bregman => cfg.divergence.build()?,
                        _ => BregmanSpec::squared_euclidean(),
                    };
                    let run = lloyd_fit(
                        &spec,
                        &sample,
                        cfg.k,
                        cfg.probes.restarts,
                        cfg.probes.max_iters,
                        cfg.seed,
                    )?;
                    serde_json::to_value(run).map_err(Error::from)?
                }
                FitKind::Em => {
                    let (s1, s2) = cfg.spectrum()?;
                    let opts = EmOptions {
                        restarts: cfg.probes.restarts,
                        max_iters: cfg.probes.max_iters,
                        ..EmOptions::new(cfg.k, s1, s2, cfg.seed)
                    };
                    serde_json::to_value(em_fit(&sample, &opts)?).map_err(Error::from)?
                }
            };
            emit_json(cli, &value, "fit.json")
        }
        Command::Verify { kind } => {
            let cfg = require_config(cli)?;
            let report = match kind {
                VerifyKind::Kmeans => harness::verify_kmeans(&cfg)?,
                VerifyKind::Gmm => harness::verify_gmm(&cfg)?,
            };
            emit_report(cli, &report)
        }
        Command::Rates => {
            let cfg = require_config(cli)?;
            let report = harness::rate_study(&cfg)?;
            emit_report(cli, &report)
        }
        Command::Audit => {
            let cfg = require_config(cli)?;
            let outcome = harness::audit(&cfg)?;
            if let Some(dir) = &cli.out {
                harness::write_audit_outputs(&outcome, dir)?;
            }
            if !cli.quiet {
                let mut out = io::stdout().lock();
                writeln!(
                    out,
                    "{} at m = {}, eps = {}",
                    outcome.kind, outcome.m, outcome.eps
                )?;
                writeln!(
                    out,
                    "  dominance: {} parameter sets, {} points, {} violations",
                    outcome.dominance.params_checked,
                    outcome.dominance.points_checked,
                    outcome.dominance.violations()
                )?;
                for ch in &outcome.checks {
                    writeln!(
                        out,
                        "  {:<11} {}/{} passed (min margin {:.3e}) {}",
                        ch.name,
                        ch.passed,
                        ch.trials,
                        ch.min_margin,
                        if ch.ok { "ok" } else { "FAIL" }
                    )?;
                }
            }
            if outcome.passed {
                Ok(())
            } else {
                Err(Failure::Dominance)
            }
        }
    }
}

fn cover(cli: &Cli, kind: &CoverKind) -> Outcome {
    let report = match *kind {
        CoverKind::Lp {
            radius,
            dim,
            tau,
            cap,
        } => lp_ball_cover(radius, dim, tau, cap)?,
        CoverKind::Cov {
            sigma1,
            sigma2,
            eps,
            dim,
            cap,
        } => covariance_cover(sigma1, sigma2, eps, dim, cap)?,
        CoverKind::Mixture {
            radius,
            radius2,
            sigma1,
            sigma2,
            c1,
            k,
            eps,
            dim,
        } => {
            let mc = mixture_cover(radius, radius2, sigma1, sigma2, c1, k, eps, dim)?;
            return emit_json(
                cli,
                &serde_json::to_value(mc).map_err(Error::from)?,
                "cover.json",
            );
        }
    };
    if cli.format == Format::Csv {
        return write_target(cli, "cover.csv", |w| report.write_csv(w));
    }
    let mut summary = serde_json::to_value(&report).map_err(Error::from)?;
    summary["enumerated"] = json!(report.enumerated_len());
    emit_json(cli, &summary, "cover.json")
}

/// Writes to `--out/<name>` when set, else stdout.
fn write_target(
    cli: &Cli,
    name: &str,
    f: impl FnOnce(&mut dyn Write) -> devbound::Result<()>,
) -> Outcome {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut file = std::fs::File::create(dir.join(name))?;
            f(&mut file)?;
        }
        None if !cli.quiet => f(&mut io::stdout().lock())?,
        None => {}
    }
    Ok(())
}

fn emit_json(cli: &Cli, value: &Value, name: &str) -> Outcome {
    write_target(cli, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn emit_bound(cli: &Cli, report: &BoundReport) -> Outcome {
    match cli.format {
        Format::Json => emit_json(
            cli,
            &serde_json::to_value(report).map_err(Error::from)?,
            "bound.json",
        ),
        Format::Csv => write_target(cli, "bound.csv", |w| {
            writeln!(w, "term,value")?;
            for t in &report.terms {
                writeln!(w, "{},{}", t.name, t.value)?;
            }
            writeln!(w, "total,{}", report.total)?;
            Ok(())
        }),
    }
}

fn emit_report(cli: &Cli, report: &VerificationReport) -> Outcome {
    if let Some(dir) = &cli.out {
        harness::write_outputs(report, dir)?;
    }
    if !cli.quiet {
        let mut out = io::stdout().lock();
        match (cli.format, &cli.out) {
            (Format::Csv, None) => harness::write_trials_csv(&report.trials, &mut out)?,
            (Format::Json, None) => harness::write_report_json(report, &mut out)?,
            _ => summarize(report, &mut out)?,
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Dominance)
    }
}

fn summarize(report: &VerificationReport, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "{}: {} trials", report.kind, report.trials.len())?;
    writeln!(
        out,
        "  dominance {:.4} (required {:.4}) {}",
        report.dominance_fraction,
        report.required_dominance,
        if report.passed { "ok" } else { "FAIL" }
    )?;
    write!(out, "{}", report.bound.render_table())?;
    if let Some(fit) = &report.rate_fit {
        writeln!(
            out,
            "  observed slope {:.4} (R² {:.3}), formula slope {:.4}, rate exponent {:.4}",
            fit.observed.slope, fit.observed.r2, fit.formula.slope, fit.rate_exponent
        )?;
    }
    Ok(())
}

/// Bound inputs merged from flags and an optional config.
struct Resolved<'a> {
    params: &'a Params,
    cfg: Option<&'a ExperimentConfig>,
}

fn missing(name: &str) -> Error {
    Error::InvalidArgument(format!("missing --{name} (or a --config providing it)"))
}

impl<'a> Resolved<'a> {
    fn new(params: &'a Params, cfg: Option<&'a ExperimentConfig>) -> Result<Self, Error> {
        Ok(Self { params, cfg })
    }

    fn p(&self) -> Result<u32, Error> {
        self.params
            .p
            .or(self.cfg.map(|c| c.p))
            .ok_or_else(|| missing("p"))
    }

    fn p_prime(&self) -> Result<u32, Error> {
        if let Some(v) = self.params.p_prime {
            return Ok(v);
        }
        if let Some(cfg) = self.cfg {
            return Ok(cfg.p_prime());
        }
        Ok((self.p()? / 4).max(1))
    }

    fn k(&self) -> Result<usize, Error> {
        self.params
            .k
            .or(self.cfg.map(|c| c.k))
            .ok_or_else(|| missing("k"))
    }

    fn m(&self) -> Result<u64, Error> {
        self.params
            .m
            .or(self.cfg.and_then(|c| c.m))
            .ok_or_else(|| missing("m"))
    }

    fn delta(&self) -> Result<f64, Error> {
        self.params
            .delta
            .or(self.cfg.map(|c| c.delta))
            .ok_or_else(|| missing("delta"))
    }

    fn d(&self) -> Result<usize, Error> {
        self.params
            .d
            .or(self.cfg.map(|c| c.distribution.dim()))
            .ok_or_else(|| missing("d"))
    }

    fn sigma1(&self) -> Result<f64, Error> {
        self.params
            .sigma1
            .or(self.cfg.and_then(|c| c.sigma1))
            .ok_or_else(|| missing("sigma1"))
    }

    fn sigma2(&self) -> Result<f64, Error> {
        self.params
            .sigma2
            .or(self.cfg.and_then(|c| c.sigma2))
            .ok_or_else(|| missing("sigma2"))
    }

    fn eps(&self) -> Result<f64, Error> {
        if let Some(e) = self.params.eps {
            return Ok(e);
        }
        let policy = self
            .cfg
            .map(|c| c.eps_policy.clone())
            .unwrap_or(EpsPolicy::Auto);
        Ok(policy.eps(self.p()?, self.m()?))
    }

    fn spec(&self) -> Result<BregmanSpec, Error> {
        match self.params.divergence.as_deref() {
            Some("squared-euclidean") => Ok(BregmanSpec::squared_euclidean()),
            Some("log-cosh-quadratic") => Ok(BregmanSpec::logcosh_quadratic()),
            Some(other) => Err(Error::InvalidArgument(format!(
                "unknown divergence {other}"
            ))),
            None => match self.cfg {
                Some(c) if c.cost == CostKind::Bregman => c.divergence.build(),
                _ => Ok(BregmanSpec::squared_euclidean()),
            },
        }
    }

    /// `M` from `--moment`, else certified from the configured distribution.
    fn moment(&self) -> Result<f64, Error> {
        if let Some(m) = self.params.moment {
            return Ok(m);
        }
        let cfg = self.cfg.ok_or_else(|| missing("moment"))?;
        Ok(certified_moment(&cfg.distribution, self.p()?)?.m)
    }

    fn profile(&self) -> Result<MomentProfile, Error> {
        if self.params.moment.is_none() {
            if let Some(cfg) = self.cfg {
                return certified_moment(&cfg.distribution, self.p()?);
            }
        }
        MomentProfile::new(self.p()?, self.moment()?, Norm::L2, vec![0.0; self.d()?])
    }

    /// `c` from `--c`, a fixed config policy, or the single-center cost of the
    /// config's evaluation set.
    fn c(&self) -> Result<f64, Error> {
        if let Some(c) = self.params.c {
            return Ok(c);
        }
        let cfg = self.cfg.ok_or_else(|| missing("c"))?;
        match cfg.c_policy() {
            CPolicy::Fixed { value } => Ok(value),
            CPolicy::SampleVariance { factor } => {
                let eval = EvalSet::draw(&cfg.distribution, cfg.n_eval, cfg.seed, 0)?;
                Ok(factor * reference_cost(&eval.points)?)
            }
        }
    }
}

fn kmeans(r: &Resolved) -> Result<BoundReport, Error> {
    bounds::kmeans_bound(
        r.moment()?,
        r.p()?,
        r.c()?,
        r.d()?,
        r.k()?,
        r.m()?,
        r.delta()?,
    )
}

fn bregman(r: &Resolved) -> Result<BoundReport, Error> {
    bounds::bregman_bound(
        &r.profile()?,
        &r.spec()?,
        r.c()?,
        r.eps()?,
        r.p_prime()?,
        r.k()?,
        r.m()?,
        r.delta()?,
    )
}

fn clamp(r: &Resolved) -> Result<BoundReport, Error> {
    let spec = r.spec()?;
    let profile = r.profile()?;
    let eps = r.eps()?;
    let b = build_km_bracket(
        &profile,
        &spec,
        r.c()?,
        eps,
        r.p_prime()?,
        r.m()?,
        r.delta()?,
    )?;
    let cl = clamp_from_bracket(&b, &profile);
    bounds::clamp_bound(
        &cl,
        &spec,
        eps,
        b.eps_rho,
        b.eps_rho_hat,
        r.k()?,
        r.m()?,
        r.delta()?,
    )
}

fn gmm(r: &Resolved) -> Result<BoundReport, Error> {
    bounds::gmm_bound(
        &r.profile()?,
        r.sigma1()?,
        r.sigma2()?,
        r.c()?,
        r.k()?,
        r.m()?,
        r.delta()?,
        r.params.eps,
    )
}
