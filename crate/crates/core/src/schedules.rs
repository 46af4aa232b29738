//! Stepsize policies.
//!
//! `log` is the natural logarithm throughout.

use serde::{Deserialize, Serialize};

use crate::error::{OpcaError, Result};
use crate::matops::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepsizeKind {
    Constant,
    Diminishing,
    PaperConstant,
    PaperDiminishing,
    Adaoja,
    Adasgn,
}

impl StepsizeKind {
    pub fn label(self) -> &'static str {
        match self {
            StepsizeKind::Constant => "constant",
            StepsizeKind::Diminishing => "diminishing",
            StepsizeKind::PaperConstant => "paper-constant",
            StepsizeKind::PaperDiminishing => "paper-diminishing",
            StepsizeKind::Adaoja => "adaoja",
            StepsizeKind::Adasgn => "adasgn",
        }
    }

    /// Schedules that need the true `λ_p` and `ν`.
    pub fn is_oracle(self) -> bool {
        matches!(
            self,
            StepsizeKind::PaperConstant | StepsizeKind::PaperDiminishing
        )
    }
}

pub fn constant_alpha(_k: u64, alpha: f64) -> f64 {
    alpha
}

/// `α = (λ_p/ν) log(K)/K`.
pub fn paper_constant_alpha(num_batches: usize, lambda_p: f64, nu: f64) -> Result<f64> {
    if num_batches < 2 {
        return Err(OpcaError::BadRange(format!(
            "need K >= 2, got {num_batches}"
        )));
    }
    if !(lambda_p > 0.0 && nu > 0.0) {
        return Err(OpcaError::BadRange(format!(
            "need λ_p > 0 and ν > 0, got λ_p = {lambda_p}, ν = {nu}"
        )));
    }
    let k = num_batches as f64;
    Ok(lambda_p / nu * k.ln() / k)
}

/// Parameters of `α^{(k)} = γ / (c1 (k + c2)^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiminishingParams {
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub beta: f64,
}

impl DiminishingParams {
    pub fn new(gamma: f64, c1: f64, c2: f64, beta: f64) -> Result<Self> {
        if !(gamma > 0.0 && c1 > 0.0 && c2 > 0.0 && beta > 0.0 && beta <= 1.0) {
            return Err(OpcaError::BadRange(format!(
                "diminishing schedule needs γ, c1, c2 > 0 and 0 < β <= 1 \
                 (got γ = {gamma}, c1 = {c1}, c2 = {c2}, β = {beta})"
            )));
        }
        Ok(DiminishingParams {
            gamma,
            c1,
            c2,
            beta,
        })
    }

    /// `γ/(k+1)`.
    pub fn harmonic(gamma: f64) -> Result<Self> {
        DiminishingParams::new(gamma, 1.0, 1.0, 1.0)
    }
}

pub fn diminishing_alpha(k: u64, params: &DiminishingParams) -> f64 {
    params.gamma / (params.c1 * (k as f64 + params.c2).powf(params.beta))
}

/// `c1 = ν/λ_p`, `β = 1 − 1/log K`, `γ = (1−β) log K / K^{1−β}`, `c2 = γ^{1/(β−1)}`.
///
/// Algebraically `γ = 1/e` and `c2 = K`.
pub fn paper_diminishing_params(
    num_batches: usize,
    lambda_p: f64,
    nu: f64,
) -> Result<DiminishingParams> {
    if num_batches < 3 {
        return Err(OpcaError::BadRange(format!(
            "need K >= 3, got {num_batches}"
        )));
    }
    if !(lambda_p > 0.0 && nu > 0.0) {
        return Err(OpcaError::BadRange(format!(
            "need λ_p > 0 and ν > 0, got λ_p = {lambda_p}, ν = {nu}"
        )));
    }
    let k = num_batches as f64;
    let log_k = k.ln();
    let beta = 1.0 - 1.0 / log_k;
    let gamma = (1.0 - beta) * log_k / k.powf(1.0 - beta);
    let c2 = gamma.powf(1.0 / (beta - 1.0));
    let c1 = nu / lambda_p;
    debug_assert!((gamma * std::f64::consts::E - 1.0).abs() <= 1e-9);
    debug_assert!((c2 / k - 1.0).abs() <= 1e-9);
    DiminishingParams::new(gamma, c1, c2, beta)
}

/// Per-column AdaGrad accumulators `b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaOjaState {
    b: Vec<f64>,
}

/// Initial accumulator value.
pub const ADAOJA_B0: f64 = 1e-5;

impl AdaOjaState {
    pub fn new(p: usize, b0: f64) -> Result<Self> {
        if !(b0 > 0.0) {
            return Err(OpcaError::BadRange(format!(
                "AdaOja b0 must be > 0, got {b0}"
            )));
        }
        Ok(AdaOjaState { b: vec![b0; p] })
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.b
    }

    /// `b_i ← sqrt(b_i² + ‖G_{:,i}‖²)`; returns the column stepsizes `1/b_i`.
    pub fn update(&mut self, g: &Matrix) -> Vec<f64> {
        assert_eq!(g.ncols(), self.b.len(), "AdaOja column count");
        for (b, col) in self.b.iter_mut().zip(g.column_iter()) {
            *b = (*b * *b + col.norm_squared()).sqrt();
        }
        self.b.iter().map(|b| 1.0 / b).collect()
    }
}

/// Consistency-driven stepsize state with `r^{(0)} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaSgnState {
    r_sum: f64,
}

impl Default for AdaSgnState {
    fn default() -> Self {
        AdaSgnState { r_sum: 1.0 }
    }
}

impl AdaSgnState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Running `Σ_i r^{(i)}`.
    pub fn r_sum(&self) -> f64 {
        self.r_sum
    }

    /// `α^{(0)} = 1/r^{(0)}`.
    pub fn initial_alpha(&self) -> f64 {
        1.0
    }

    /// Stepsize for `k > 0` from `f̂^{(k)}(X^{(k−1)})` and `f̂^{(k)}(X^{(k)})`.
    ///
    /// When the new batch rates the current iterate worse than the previous one,
    /// `r = f̂(X^{(k−1)})/f̂(X^{(k)})` and `α = r/Σr`; otherwise `r = 0` and
    /// `α = 1/Σr`. The sum includes the current `r`.
    pub fn update(&mut self, fhat_prev_iterate: f64, fhat_curr_iterate: f64) -> Result<f64> {
        if fhat_curr_iterate > fhat_prev_iterate {
            if !(fhat_curr_iterate > 0.0) || !fhat_curr_iterate.is_finite() {
                return Err(OpcaError::ZeroObjective);
            }
            let r = fhat_prev_iterate / fhat_curr_iterate;
            self.r_sum += r;
            Ok(r / self.r_sum)
        } else {
            Ok(1.0 / self.r_sum)
        }
    }
}

/// Fallback when [`AdaSgnState::update`] reports a zero objective.
pub const ADASGN_FALLBACK_ALPHA: f64 = f64::MIN_POSITIVE;
