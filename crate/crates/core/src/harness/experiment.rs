//! Multi-trial runs, aggregation and stepsize sweeps.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OpcaError, Result};

use super::config::{Experiment, ExperimentConfig};
use super::trial::{run_trial, TraceRecord, TrialOutcome};

/// Worker count: `OPCA_WORKERS` when set to a positive integer, else the
/// available parallelism.
pub fn worker_count() -> usize {
    std::env::var("OPCA_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Pointwise statistics across trials. Variance uses the population
/// convention (divide by the trial count).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub k: Vec<u64>,
    pub samples_seen: Vec<u64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub trials: usize,
}

impl Aggregate {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_variance(&self) -> f64 {
        self.variance.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mean and variance of `error` at each recorded step.
pub fn aggregate(traces: &[&[TraceRecord]]) -> Result<Aggregate> {
    let Some(first) = traces.first() else {
        return Ok(Aggregate {
            k: Vec::new(),
            samples_seen: Vec::new(),
            mean: Vec::new(),
            variance: Vec::new(),
            trials: 0,
        });
    };
    for (i, t) in traces.iter().enumerate() {
        if t.len() != first.len() || t.iter().zip(first.iter()).any(|(a, b)| a.k != b.k) {
            return Err(OpcaError::GridMismatch(format!(
                "trace {i} is recorded at different steps than trace 0"
            )));
        }
    }
    let count = traces.len() as f64;
    let mut mean = vec![0.0; first.len()];
    let mut variance = vec![0.0; first.len()];
    for (j, (m, v)) in mean.iter_mut().zip(variance.iter_mut()).enumerate() {
        *m = traces.iter().map(|t| t[j].error).sum::<f64>() / count;
        *v = traces
            .iter()
            .map(|t| (t[j].error - *m).powi(2))
            .sum::<f64>()
            / count;
    }
    Ok(Aggregate {
        k: first.iter().map(|r| r.k).collect(),
        samples_seen: first.iter().map(|r| r.samples_seen).collect(),
        mean,
        variance,
        trials: traces.len(),
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outcomes: Vec<TrialOutcome>,
    pub aggregate: Aggregate,
    pub failed: usize,
    pub corrections: usize,
    pub wall_seconds: f64,
}

impl ExperimentResult {
    pub fn records(&self) -> impl Iterator<Item = &TraceRecord> {
        self.outcomes.iter().flat_map(|o| o.records.iter())
    }

    pub fn all_failed(&self) -> bool {
        self.failed == self.outcomes.len()
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| OpcaError::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every trial on `workers` threads. Outcomes come back in trial order
/// whatever the scheduling, so output bytes do not depend on `workers`.
pub fn run_experiment(exp: &Experiment, workers: usize) -> Result<ExperimentResult> {
    let start = Instant::now();
    let trials = exp.config.run.trials;
    let outcomes: Vec<TrialOutcome> = pool(workers)?.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(exp, t))
            .collect()
    });
    let ok: Vec<&[TraceRecord]> = outcomes
        .iter()
        .filter(|o| !o.failed())
        .map(|o| o.records.as_slice())
        .collect();
    let aggregate = aggregate(&ok)?;
    let failed = outcomes.len() - ok.len();
    let corrections = outcomes.iter().map(|o| o.corrections).sum();
    if corrections > 0 {
        log::info!("{corrections} correction step(s) applied across {trials} trials");
    }
    Ok(ExperimentResult {
        outcomes,
        aggregate,
        failed,
        corrections,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Parses `2^a..2^b` (every integer exponent in between) or a comma list of
/// numbers, each optionally written as `2^e`.
pub fn parse_gamma_set(text: &str) -> Result<Vec<f64>> {
    let bad = || OpcaError::Config(format!("cannot parse gamma set {text:?}"));
    let power = |s: &str| -> Result<f64> {
        let s = s.trim();
        match s.strip_prefix("2^") {
            Some(e) => Ok(2f64.powi(e.trim().parse::<i32>().map_err(|_| bad())?)),
            None => s.parse::<f64>().map_err(|_| bad()),
        }
    };
    let exponent = |s: &str| -> Result<i32> {
        s.trim()
            .strip_prefix("2^")
            .and_then(|e| e.trim().parse().ok())
            .ok_or_else(bad)
    };
    let gammas = if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (exponent(lo)?, exponent(hi)?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).map(|e| 2f64.powi(e)).collect()
    } else {
        text.split(',').map(power).collect::<Result<Vec<f64>>>()?
    };
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(bad());
    }
    Ok(gammas)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub gamma: f64,
    pub final_mean: f64,
    pub final_variance: f64,
    pub failed_trials: usize,
    pub corrections: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub runs: Vec<ExperimentResult>,
    /// Index into `entries`; `None` when every setting failed.
    pub best: Option<usize>,
    pub wall_seconds: f64,
}

impl SweepResult {
    pub fn best_gamma(&self) -> Option<f64> {
        self.best.map(|i| self.entries[i].gamma)
    }

    pub fn best_error(&self) -> Option<f64> {
        self.best.map(|i| self.entries[i].final_mean)
    }
}

/// Index of the smallest finite mean; ties go to the smaller `γ`.
pub fn best_index(entries: &[SweepEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if !e.final_mean.is_finite() {
            continue;
        }
        best = match best {
            Some(b) => {
                let cur = &entries[b];
                if e.final_mean < cur.final_mean
                    || (e.final_mean == cur.final_mean && e.gamma < cur.gamma)
                {
                    Some(i)
                } else {
                    Some(b)
                }
            }
            None => Some(i),
        };
    }
    best
}

/// Runs the full trial set once per `γ`.
pub fn run_sweep(config: &ExperimentConfig, gammas: &[f64], workers: usize) -> Result<SweepResult> {
    let start = Instant::now();
    let mut entries = Vec::with_capacity(gammas.len());
    let mut runs = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let exp = Experiment::new(config.with_gamma(gamma)?)?;
        let result = run_experiment(&exp, workers)?;
        log::info!(
            "gamma = {gamma}: final error {:.3e} ({} failed)",
            result.aggregate.final_mean(),
            result.failed
        );
        entries.push(SweepEntry {
            gamma,
            final_mean: result.aggregate.final_mean(),
            final_variance: result.aggregate.final_variance(),
            failed_trials: result.failed,
            corrections: result.corrections,
        });
        runs.push(result);
    }
    let best = best_index(&entries);
    Ok(SweepResult {
        entries,
        runs,
        best,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
