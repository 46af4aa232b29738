//! One seeded trial: initialize, stream every batch once, record the error.

use serde::Serialize;

use crate::algorithms::{adaoja_step, correct_iterate, oja_gradient, oja_step, sgn_step, Iterate};
use crate::data::{sample_stream, SampleStream, StreamSpec};
use crate::error::{OpcaError, Result};
use crate::matops::Matrix;
use crate::metrics::{batch_objective, normalized_error};
use crate::rng::mix;
use crate::schedules::{diminishing_alpha, AdaOjaState, AdaSgnState, ADASGN_FALLBACK_ALPHA};

use super::config::{AlgoName, DataSource, Experiment, InitKind, ScheduleSpec};

/// One output row, describing the iterate after `k` steps.
///
/// `stepsize` is the stepsize of step `k` (mean over columns for AdaOja) and
/// `fhat` the batch objective of that step's batch at the pre-step iterate;
/// both are NaN on the `k = 0` row and on a failure sentinel. `corrected` is
/// set when a correction happened since the previous row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub trial: usize,
    pub k: u64,
    pub samples_seen: u64,
    pub error: f64,
    pub stepsize: f64,
    pub fhat: f64,
    pub corrected: bool,
}

impl TraceRecord {
    /// Sentinel row for a failed trial: `error` is NaN.
    pub fn is_sentinel(&self) -> bool {
        self.error.is_nan()
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub records: Vec<TraceRecord>,
    pub failure: Option<String>,
    pub corrections: usize,
    pub batches_fetched: usize,
    pub final_x: Matrix,
}

impl TrialOutcome {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn final_error(&self) -> Option<f64> {
        if self.failed() {
            None
        } else {
            self.records.last().map(|r| r.error)
        }
    }
}

enum Schedule {
    Constant(f64),
    Diminishing(crate::schedules::DiminishingParams),
    AdaOja(AdaOjaState),
    AdaSgn(AdaSgnState),
}

impl Schedule {
    fn start(spec: &ScheduleSpec, p: usize) -> Result<Self> {
        Ok(match *spec {
            ScheduleSpec::Constant(a) => Schedule::Constant(a),
            ScheduleSpec::Diminishing(params) => Schedule::Diminishing(params),
            ScheduleSpec::AdaOja { b0 } => Schedule::AdaOja(AdaOjaState::new(p, b0)?),
            ScheduleSpec::AdaSgn => Schedule::AdaSgn(AdaSgnState::new()),
        })
    }
}

fn open_stream<'a>(exp: &'a Experiment, key: u64) -> Result<SampleStream<'a>> {
    let spec = StreamSpec::new(exp.config.run.h, exp.config.run.m, key)?;
    match &exp.source {
        DataSource::Model(model) => sample_stream(model, spec),
        DataSource::Columns(a) => SampleStream::from_columns(a, spec),
    }
}

fn initial_iterate(exp: &Experiment, key: u64) -> Result<Iterate> {
    let n = exp.dim();
    match exp.config.run.init {
        InitKind::Random => Iterate::random(n, exp.config.data.p, key),
        InitKind::Saddle => Ok(Iterate::last_axis(n)),
    }
}

/// Runs trial `trial` of `exp`; fully determined by `(run.base_seed, trial)`.
///
/// Numerical breakdowns end the trial with a sentinel record instead of an
/// error, so sweeps always complete.
pub fn run_trial(exp: &Experiment, trial: usize) -> TrialOutcome {
    let key = mix(exp.config.run.base_seed, trial as u64);
    let mut records = Vec::new();
    let mut corrections = 0;
    let mut fetched = 0;
    let mut final_x = Matrix::zeros(0, 0);
    let result = drive(
        exp,
        trial,
        key,
        &mut records,
        &mut corrections,
        &mut fetched,
        &mut final_x,
    );
    let failure = result.err().map(|e| {
        log::warn!("trial {trial} failed: {e}");
        records.push(TraceRecord {
            trial,
            k: records.last().map_or(0, |r| r.k),
            samples_seen: records.last().map_or(0, |r| r.samples_seen),
            error: f64::NAN,
            stepsize: f64::NAN,
            fhat: f64::NAN,
            corrected: false,
        });
        e.to_string()
    });
    TrialOutcome {
        trial,
        records,
        failure,
        corrections,
        batches_fetched: fetched,
        final_x,
    }
}

fn drive(
    exp: &Experiment,
    trial: usize,
    key: u64,
    records: &mut Vec<TraceRecord>,
    corrections: &mut usize,
    fetched: &mut usize,
    final_x: &mut Matrix,
) -> Result<()> {
    let algo = exp.config.algo.name;
    let mut it = initial_iterate(exp, key)?;
    let mut schedule = Schedule::start(&exp.schedule, exp.config.data.p)?;
    let stream = open_stream(exp, key)?;
    let total = stream.num_batches();

    records.push(TraceRecord {
        trial,
        k: 0,
        samples_seen: 0,
        error: normalized_error(&it.x, &exp.truth)?,
        stepsize: f64::NAN,
        fhat: f64::NAN,
        corrected: false,
    });

    let mut samples_seen = 0u64;
    let mut previous: Option<Matrix> = None;
    let mut corrected_since_record = false;
    for batch in stream {
        *fetched += 1;
        let a = &batch.data;
        let k = batch.index as u64;
        samples_seen += a.ncols() as u64;
        let fhat = batch_objective(&it.x, a);
        let mut corrected = false;

        let alpha = match &mut schedule {
            Schedule::Constant(alpha) => *alpha,
            Schedule::Diminishing(params) => diminishing_alpha(k, params),
            Schedule::AdaSgn(state) => match &previous {
                None => state.initial_alpha(),
                Some(prev) => match state.update(batch_objective(prev, a), fhat) {
                    Ok(alpha) => alpha,
                    Err(OpcaError::ZeroObjective) => {
                        log::warn!(
                            "trial {trial} step {k}: zero objective, using fallback stepsize"
                        );
                        ADASGN_FALLBACK_ALPHA
                    }
                    Err(e) => return Err(e),
                },
            },
            Schedule::AdaOja(_) => f64::NAN,
        };

        let stepsize = match &mut schedule {
            Schedule::AdaOja(state) => {
                let g = oja_gradient(&it.x, a);
                let steps = state.update(&g);
                adaoja_step(&mut it, &g, &steps)?;
                steps.iter().sum::<f64>() / steps.len() as f64
            }
            _ if algo.is_sgn_family() => {
                if matches!(schedule, Schedule::AdaSgn(_)) {
                    previous = Some(it.x.clone());
                }
                match sgn_step(&mut it, a, alpha) {
                    Ok(()) => {}
                    Err(OpcaError::GramSingular { .. }) => {
                        if !correct_iterate(&mut it, &exp.correction)? {
                            return Err(OpcaError::GramSingular {
                                column: 0,
                                pivot: it.sigma_min * it.sigma_min,
                            });
                        }
                        *corrections += 1;
                        corrected = true;
                        sgn_step(&mut it, a, alpha)?;
                    }
                    Err(e) => return Err(e),
                }
                if !it.x.iter().all(|v| v.is_finite()) {
                    return Err(OpcaError::NonFinite);
                }
                if it.sigma_min <= exp.correction.threshold
                    && correct_iterate(&mut it, &exp.correction)?
                {
                    *corrections += 1;
                    corrected = true;
                }
                alpha
            }
            _ => {
                debug_assert!(matches!(algo, AlgoName::Oja));
                oja_step(&mut it, a, alpha)?;
                alpha
            }
        };

        corrected_since_record |= corrected;
        let step = k + 1;
        if step % exp.record_every as u64 == 0 || step == total as u64 {
            records.push(TraceRecord {
                trial,
                k: step,
                samples_seen,
                error: normalized_error(&it.x, &exp.truth)?,
                stepsize,
                fhat,
                corrected: corrected_since_record,
            });
            corrected_since_record = false;
        }
    }
    *final_x = it.x;
    Ok(())
}
