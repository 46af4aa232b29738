//! Forward-Euler integration of the deterministic limits of the SGN and Oja
//! iterations.
//!
//! The Oja limit `dx/dt = Σx − (xᵀΣx)x` (single vector) is the known flow of
//! Oja's rule and serves only as the comparison baseline.

use serde::{Deserialize, Serialize};

use crate::data::CovarianceModel;
use crate::error::{OpcaError, Result};
use crate::matops::{cholesky, cholesky_right_solve, gram, Matrix};
use crate::metrics::{normalized_error, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeLimit {
    SgnLimit,
    OjaLimit,
}

impl OdeLimit {
    pub fn label(self) -> &'static str {
        match self {
            OdeLimit::SgnLimit => "sgn-limit",
            OdeLimit::OjaLimit => "oja-limit",
        }
    }
}

/// Factor by which the error must grow over its reference to count as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Lower clamp on the running-minimum reference, so that roundoff-level
/// wiggles after convergence are not mistaken for blow-up.
pub const DIVERGENCE_FLOOR: f64 = 1e-6;

/// `ΣX(XᵀX)⁻¹ − X/2 − X(XᵀX)⁻¹XᵀΣX(XᵀX)⁻¹/2`, the SGN direction with the
/// population covariance in place of the batch estimate.
pub fn sgn_ode_drift(x: &Matrix, model: &CovarianceModel) -> Result<Matrix> {
    let l = cholesky(&gram(x))?;
    let p = cholesky_right_solve(&l, x);
    let sigma_p = model.apply(&p);
    let inner = p.tr_mul(&sigma_p);
    Ok(sigma_p - x * 0.5 - x * inner * 0.5)
}

/// `Σx − (xᵀΣx)x`.
pub fn oja_ode_drift(x: &Matrix, model: &CovarianceModel) -> Result<Matrix> {
    if x.ncols() != 1 {
        return Err(OpcaError::BadRange(format!(
            "the Oja limit is single-vector; got {} columns",
            x.ncols()
        )));
    }
    let sx = model.apply(x);
    let rayleigh = x.dot(&sx);
    Ok(sx - x * rayleigh)
}

#[derive(Debug, Clone)]
pub struct OdeRun<'a> {
    pub model: &'a CovarianceModel,
    pub x0: Matrix,
    pub dt: f64,
    pub steps: usize,
    pub limit: OdeLimit,
    /// Record every this many steps (the first and last steps are always recorded).
    pub record_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdePoint {
    pub t: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct OdeTrace {
    pub limit: OdeLimit,
    pub dt: f64,
    pub points: Vec<OdePoint>,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
    pub final_x: Matrix,
}

impl OdeTrace {
    pub fn final_error(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.error)
    }
}

/// `X_{j+1} = X_j + dt·drift(X_j)`, tracking the normalized sin-Θ error.
///
/// The Oja limit is renormalized to unit length after every step. Divergence is
/// flagged, not raised, when entries go non-finite, the iterate loses rank, or
/// the error exceeds [`DIVERGENCE_FACTOR`] times its running minimum (which
/// starts at the initial error; clamped below by [`DIVERGENCE_FLOOR`]).
pub fn euler_integrate(run: &OdeRun<'_>) -> Result<OdeTrace> {
    if !(run.dt > 0.0) {
        return Err(OpcaError::BadRange(format!(
            "dt must be > 0, got {}",
            run.dt
        )));
    }
    let p = run.x0.ncols();
    let gt = GroundTruth::from_model(run.model, p)?;
    let record_every = run.record_every.max(1);
    let mut x = run.x0.clone();
    if run.limit == OdeLimit::OjaLimit {
        let norm = x.norm();
        x /= norm;
    }
    let e0 = normalized_error(&x, &gt)?;
    let mut points = vec![OdePoint { t: 0.0, error: e0 }];
    let mut running_min = e0;
    let mut diverged_at = None;

    for j in 1..=run.steps {
        let drift = match run.limit {
            OdeLimit::SgnLimit => sgn_ode_drift(&x, run.model),
            OdeLimit::OjaLimit => oja_ode_drift(&x, run.model),
        };
        let t = j as f64 * run.dt;
        let drift = match drift {
            Ok(d) => d,
            Err(OpcaError::GramSingular { .. }) => {
                diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        x.zip_apply(&drift, |v, d| *v += run.dt * d);
        if run.limit == OdeLimit::OjaLimit {
            let norm = x.norm();
            x /= norm;
        }
        if !x.iter().all(|v| v.is_finite()) {
            diverged_at = Some(t);
            points.push(OdePoint { t, error: f64::NAN });
            break;
        }
        let error = match normalized_error(&x, &gt) {
            Ok(e) => e,
            Err(OpcaError::RankDeficient { .. }) | Err(OpcaError::NonFinite) => {
                diverged_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        if diverged_at.is_none() && error > DIVERGENCE_FACTOR * running_min.max(DIVERGENCE_FLOOR) {
            diverged_at = Some(t);
        }
        running_min = running_min.min(error);
        if j % record_every == 0 || j == run.steps {
            points.push(OdePoint { t, error });
        }
    }

    Ok(OdeTrace {
        limit: run.limit,
        dt: run.dt,
        points,
        diverged: diverged_at.is_some(),
        diverged_at,
        final_x: x,
    })
}
