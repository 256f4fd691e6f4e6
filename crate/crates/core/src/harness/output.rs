use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::audit::AuditOutcome;
use super::run::{RateFit, TrialRecord, VerificationReport};
use crate::Result;

pub fn write_report_json<W: Write>(report: &VerificationReport, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Columns `trial, m, deviation, bound, margin`.
pub fn write_trials_csv<W: Write>(trials: &[TrialRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial", "m", "deviation", "bound", "margin"])?;
    for t in trials {
        out.write_record([
            t.trial.to_string(),
            t.m.to_string(),
            t.deviation.to_string(),
            t.bound.to_string(),
            t.margin.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `m, median_dev, bound`.
pub fn write_ratefit_csv<W: Write>(fit: &RateFit, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["m", "median_dev", "bound"])?;
    for p in &fit.points {
        out.write_record([
            p.m.to_string(),
            p.median_dev.to_string(),
            p.bound.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `report.json`, `trials.csv` and, for rate studies, `ratefit.csv`.
pub fn write_outputs(report: &VerificationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    write_report_json(report, fs::File::create(&path)?)?;
    written.push(path);
    let path = dir.join("trials.csv");
    write_trials_csv(&report.trials, fs::File::create(&path)?)?;
    written.push(path);
    if let Some(fit) = &report.rate_fit {
        let path = dir.join("ratefit.csv");
        write_ratefit_csv(fit, fs::File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `audit.json`.
pub fn write_audit_outputs(outcome: &AuditOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = dir.join("audit.json");
    let mut f = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, outcome)?;
    f.write_all(b"\n")?;
    Ok(vec![path])
}
