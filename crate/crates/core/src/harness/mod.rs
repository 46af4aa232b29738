//! Config-driven experiments: seeded trials, sweeps, ODE runs and their output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod trial;

use crate::algorithms::Iterate;
use crate::diffusion::{euler_integrate, OdeLimit, OdeRun, OdeTrace};
use crate::error::{OpcaError, Result};
use crate::rng::mix;

pub use config::{
    AlgoName, Basis, DataKind, DataSource, Experiment, ExperimentConfig, InitKind, ScheduleSpec,
};
pub use experiment::{
    aggregate, best_index, parse_gamma_set, run_experiment, run_sweep, worker_count, Aggregate,
    ExperimentResult, SweepEntry, SweepResult,
};
pub use trial::{run_trial, TraceRecord, TrialOutcome};

/// Limits integrated by default for a `p`-column start.
pub fn default_ode_limits(p: usize) -> Vec<OdeLimit> {
    if p == 1 {
        vec![OdeLimit::SgnLimit, OdeLimit::OjaLimit]
    } else {
        vec![OdeLimit::SgnLimit]
    }
}

/// Integrates each configured limit at each `ode.dt` from the trial-0 start,
/// up to `ode.t_end`.
pub fn run_ode(exp: &Experiment) -> Result<Vec<(OdeTrace, usize)>> {
    let model = exp
        .model()
        .ok_or_else(|| OpcaError::Config("the ode command needs a synthetic data model".into()))?;
    let cfg = &exp.config;
    let key = mix(cfg.run.base_seed, 0);
    let x0 = match cfg.run.init {
        InitKind::Random => Iterate::random(exp.dim(), cfg.data.p, key)?.x,
        InitKind::Saddle => Iterate::last_axis(exp.dim()).x,
    };
    let limits = cfg
        .ode
        .limits
        .clone()
        .unwrap_or_else(|| default_ode_limits(cfg.data.p));
    let mut out = Vec::new();
    for limit in limits {
        for &dt in &cfg.ode.dt {
            let steps = (cfg.ode.t_end / dt).round() as usize;
            let trace = euler_integrate(&OdeRun {
                model,
                x0: x0.clone(),
                dt,
                steps,
                limit,
                record_every: cfg.ode.record_every,
            })?;
            if trace.diverged {
                log::info!(
                    "{} at dt = {dt} diverged at t = {:?}",
                    limit.label(),
                    trace.diverged_at
                );
            }
            out.push((trace, steps));
        }
    }
    Ok(out)
}
