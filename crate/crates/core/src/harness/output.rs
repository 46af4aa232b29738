//! CSV traces and JSON summaries.
//!
//! Floats are written in shortest round-trip exponent form, so the CSV bytes
//! are a pure function of the values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::diffusion::OdeTrace;
use crate::error::{OpcaError, Result};

use super::config::Experiment;
use super::experiment::{Aggregate, ExperimentResult, SweepEntry, SweepResult};
use super::trial::TraceRecord;

pub const TRACE_HEADER: &str = "trial,k,samples_seen,error,stepsize,fhat,corrected";

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn trace_row(r: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.trial,
        r.k,
        r.samples_seen,
        num(r.error),
        num(r.stepsize),
        num(r.fhat),
        r.corrected
    )
}

pub fn write_trace_csv<'a>(
    out: &mut impl Write,
    records: impl IntoIterator<Item = &'a TraceRecord>,
) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(out, "{}", trace_row(r))?;
    }
    Ok(())
}

/// Sweep traces: the trace columns prefixed by the `gamma` of each run.
pub fn write_sweep_csv(out: &mut impl Write, sweep: &SweepResult) -> std::io::Result<()> {
    writeln!(out, "gamma,{TRACE_HEADER}")?;
    for (entry, run) in sweep.entries.iter().zip(&sweep.runs) {
        for r in run.records() {
            writeln!(out, "{},{}", num(entry.gamma), trace_row(r))?;
        }
    }
    Ok(())
}

pub fn write_aggregate_csv(out: &mut impl Write, agg: &Aggregate) -> std::io::Result<()> {
    writeln!(out, "k,samples_seen,mean,variance")?;
    for j in 0..agg.k.len() {
        writeln!(
            out,
            "{},{},{},{}",
            agg.k[j],
            agg.samples_seen[j],
            num(agg.mean[j]),
            num(agg.variance[j])
        )?;
    }
    Ok(())
}

pub fn write_ode_csv(out: &mut impl Write, traces: &[OdeTrace]) -> std::io::Result<()> {
    writeln!(out, "limit,dt,t,error")?;
    for tr in traces {
        for p in &tr.points {
            writeln!(
                out,
                "{},{},{},{}",
                tr.limit.label(),
                num(tr.dt),
                num(p.t),
                num(p.error)
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub algo: String,
    pub stepsize: String,
    /// The schedule needed the true `λ_p` and `ν`.
    pub oracle_stepsize: bool,
    pub alpha: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub p_prime: usize,
    pub lambda_p: f64,
    pub nu: f64,
    pub num_batches: usize,
    pub trials: usize,
    pub failed_trials: usize,
    pub corrections: usize,
    pub final_error_mean: f64,
    pub final_error_variance: f64,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn new(exp: &Experiment, result: &ExperimentResult) -> Self {
        RunSummary {
            algo: format!("{:?}", exp.config.algo.name).to_lowercase(),
            stepsize: exp.kind.label().to_string(),
            oracle_stepsize: exp.kind.is_oracle(),
            alpha: match exp.schedule {
                super::config::ScheduleSpec::Constant(a) => Some(a),
                _ => None,
            },
            n: exp.dim(),
            p: exp.truth.p,
            p_prime: exp.truth.p_prime,
            lambda_p: exp.truth.lambda_p(),
            nu: exp.truth.nu,
            num_batches: exp.num_batches,
            trials: result.outcomes.len(),
            failed_trials: result.failed,
            corrections: result.corrections,
            final_error_mean: result.aggregate.final_mean(),
            final_error_variance: result.aggregate.final_variance(),
            wall_seconds: result.wall_seconds,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepSummary<'a> {
    pub algo: String,
    pub stepsize: String,
    pub entries: &'a [SweepEntry],
    pub best_gamma: Option<f64>,
    pub best_final_error: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct OdeSummaryEntry {
    pub limit: String,
    pub dt: f64,
    pub steps: usize,
    pub final_error: f64,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
}

impl OdeSummaryEntry {
    pub fn new(trace: &OdeTrace, steps: usize) -> Self {
        OdeSummaryEntry {
            limit: trace.limit.label().to_string(),
            dt: trace.dt,
            steps,
            final_error: trace.final_error(),
            diverged: trace.diverged,
            diverged_at: trace.diverged_at,
        }
    }
}

/// `serde_json` writes non-finite floats as `null`.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| OpcaError::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| OpcaError::io(path, e))
}

pub fn write_file(
    path: &Path,
    fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| OpcaError::io(path, e))?;
    fs::write(path, buf).map_err(|e| OpcaError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_stable() {
        let r = TraceRecord {
            trial: 3,
            k: 10,
            samples_seen: 20,
            error: 0.125,
            stepsize: f64::NAN,
            fhat: 1e-300,
            corrected: false,
        };
        assert_eq!(trace_row(&r), "3,10,20,1.25e-1,NaN,1e-300,false");
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, [&r]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(TRACE_HEADER));
    }
}
