//! Experiment configuration files.
//!
//! ```toml
//! [data]
//! kind = "gau-gap-1"
//! n = 500
//! p = 1
//! mu_min = 0.01
//! mu_max = 10.0
//! rho = 0.1
//!
//! [algo]
//! name = "sgn"
//!
//! [stepsize]
//! kind = "diminishing"
//! gamma = 1.0
//!
//! [run]
//! h = 1
//! m = 10000
//! trials = 100
//! base_seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{CorrectionPolicy, QChoice, FLAT_CORRECTION_THRESHOLD};
use crate::data::{
    center_columns, empirical_covariance, load_matrix_file, make_gau_gap_1, make_gau_gap_2,
    make_gau_ngap, CovarianceModel, MatrixFormat,
};
use crate::diffusion::OdeLimit;
use crate::error::{OpcaError, Result};
use crate::matops::{symmetric_eig, Matrix};
use crate::metrics::GroundTruth;
use crate::schedules::{
    paper_constant_alpha, paper_diminishing_params, DiminishingParams, StepsizeKind, ADAOJA_B0,
};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub algo: AlgoConfig,
    #[serde(default)]
    pub stepsize: StepsizeConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub correction: CorrectionConfig,
    #[serde(default)]
    pub ode: OdeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    #[serde(rename = "gau-gap-1")]
    GauGap1,
    #[serde(rename = "gau-gap-2")]
    GauGap2,
    GauNgap,
    File,
}

/// Orientation of the planted directions of a synthetic model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// Seeded random orthonormal `Q`.
    #[default]
    Random,
    /// `Q` = leading coordinate axes, so `Σ` is diagonal.
    Axis,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub n: Option<usize>,
    pub p: usize,
    pub p1: Option<usize>,
    pub p_prime: Option<usize>,
    /// Lower planted value (`μ̲`); for `gau-gap-2` the value of the trailing block.
    pub mu_min: Option<f64>,
    /// Upper planted value (`μ̄`); for `gau-gap-2` the value of the leading block.
    pub mu_max: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub basis: Basis,
    /// Model seed; defaults to `run.base_seed`.
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    pub format: Option<MatrixFormat>,
    #[serde(default = "default_true")]
    pub center: bool,
}

fn default_rho() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoName {
    Oja,
    Sgn,
    Adaoja,
    Adasgn,
}

impl AlgoName {
    pub fn is_sgn_family(self) -> bool {
        matches!(self, AlgoName::Sgn | AlgoName::Adasgn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub name: AlgoName,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StepsizeConfig {
    /// Defaults to `adaoja`/`adasgn` for those algorithms; required otherwise.
    pub kind: Option<StepsizeKind>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub b0: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    #[default]
    Random,
    Saddle,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub h: usize,
    pub m: usize,
    pub trials: usize,
    /// Defaults to 100 when there are at least 10⁴ batches, else 1.
    pub record_every: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub init: InitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionConfig {
    pub threshold: Option<f64>,
    pub theta: Option<f64>,
    #[serde(default = "default_q_choice")]
    pub q_choice: QChoice,
}

fn default_q_choice() -> QChoice {
    QChoice::TailLeftSingular
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            threshold: None,
            theta: None,
            q_choice: default_q_choice(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    /// Defaults to both limits when `p = 1`, else the SGN limit only.
    pub limits: Option<Vec<OdeLimit>>,
    #[serde(default = "default_dts")]
    pub dt: Vec<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_one")]
    pub record_every: usize,
}

fn default_dts() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.5]
}

fn default_t_end() -> f64 {
    200.0
}

fn default_one() -> usize {
    1
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig {
            limits: None,
            dt: default_dts(),
            t_end: default_t_end(),
            record_every: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| OpcaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative data paths resolve against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| OpcaError::io(path, e))?;
        let mut cfg = ExperimentConfig::from_toml_str(&text)?;
        if let (Some(data_path), Some(dir)) = (cfg.data.path.as_mut(), path.parent()) {
            if data_path.is_relative() {
                *data_path = dir.join(&*data_path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn stepsize_kind(&self) -> Result<StepsizeKind> {
        match (self.algo.name, self.stepsize.kind) {
            (AlgoName::Adaoja, None) => Ok(StepsizeKind::Adaoja),
            (AlgoName::Adasgn, None) => Ok(StepsizeKind::Adasgn),
            (_, Some(kind)) => Ok(kind),
            (name, None) => Err(OpcaError::Config(format!(
                "stepsize.kind is required for algo {name:?}"
            ))),
        }
    }

    pub fn num_batches(&self) -> usize {
        self.run.m.div_ceil(self.run.h.max(1))
    }

    pub fn record_every(&self) -> usize {
        self.run
            .record_every
            .unwrap_or(if self.num_batches() >= 10_000 { 100 } else { 1 })
            .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OpcaError::Config(msg));
        let run = &self.run;
        if run.trials == 0 {
            return bad("run.trials must be >= 1".into());
        }
        if run.h == 0 {
            return bad("run.h must be >= 1".into());
        }
        if run.m < run.h {
            return bad(format!("run.m = {} must be >= run.h = {}", run.m, run.h));
        }
        if run.record_every == Some(0) {
            return bad("run.record_every must be >= 1".into());
        }
        if self.data.p == 0 {
            return bad("data.p must be >= 1".into());
        }
        if run.init == InitKind::Saddle && self.data.p != 1 {
            return bad("init = \"saddle\" needs data.p = 1".into());
        }

        let kind = self.stepsize_kind()?;
        let algo = self.algo.name;
        match kind {
            StepsizeKind::Adasgn if !algo.is_sgn_family() => {
                return bad(format!("stepsize adasgn cannot drive {algo:?}"));
            }
            StepsizeKind::Adaoja if algo.is_sgn_family() => {
                return bad(format!("stepsize adaoja cannot drive {algo:?}"));
            }
            _ => {}
        }
        if algo == AlgoName::Adasgn && kind != StepsizeKind::Adasgn {
            return bad("algo adasgn needs stepsize.kind = \"adasgn\"".into());
        }
        if algo == AlgoName::Adaoja && kind != StepsizeKind::Adaoja {
            return bad("algo adaoja needs stepsize.kind = \"adaoja\"".into());
        }
        let st = &self.stepsize;
        match kind {
            StepsizeKind::Constant => match st.alpha {
                Some(a) if a >= 0.0 && a.is_finite() => {}
                other => return bad(format!("constant stepsize needs alpha >= 0, got {other:?}")),
            },
            StepsizeKind::Diminishing => {
                self.diminishing_params(st.gamma.unwrap_or(f64::NAN))?;
            }
            StepsizeKind::Adaoja => {
                if let Some(b0) = st.b0 {
                    if !(b0 > 0.0) {
                        return bad(format!("stepsize.b0 must be > 0, got {b0}"));
                    }
                }
            }
            StepsizeKind::PaperConstant | StepsizeKind::PaperDiminishing | StepsizeKind::Adasgn => {
            }
        }

        for dt in &self.ode.dt {
            if !(*dt > 0.0) {
                return bad(format!("ode.dt entries must be > 0, got {dt}"));
            }
        }
        if !(self.ode.t_end > 0.0) {
            return bad(format!("ode.t_end must be > 0, got {}", self.ode.t_end));
        }
        if let Some(limits) = &self.ode.limits {
            if limits.contains(&OdeLimit::OjaLimit) && self.data.p != 1 {
                return bad("the Oja limit needs data.p = 1".into());
            }
        }
        if let Some(t) = self.correction.threshold {
            if !(t > 0.0) {
                return bad(format!("correction.threshold must be > 0, got {t}"));
            }
        }
        if let Some(t) = self.correction.theta {
            if !(t > 0.0) {
                return bad(format!("correction.theta must be > 0, got {t}"));
            }
        }
        Ok(())
    }

    /// `γ/(c1 (k+c2)^β)` with `c1 = c2 = β = 1` unless overridden.
    pub fn diminishing_params(&self, gamma: f64) -> Result<DiminishingParams> {
        let st = &self.stepsize;
        DiminishingParams::new(
            gamma,
            st.c1.unwrap_or(1.0),
            st.c2.unwrap_or(1.0),
            st.beta.unwrap_or(1.0),
        )
        .map_err(|e| OpcaError::Config(e.to_string()))
    }

    /// Copy with the sweep parameter set: `alpha` for constant, `gamma` for
    /// diminishing schedules.
    pub fn with_gamma(&self, gamma: f64) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        match self.stepsize_kind()? {
            StepsizeKind::Constant => cfg.stepsize.alpha = Some(gamma),
            StepsizeKind::Diminishing => cfg.stepsize.gamma = Some(gamma),
            other => {
                return Err(OpcaError::Config(format!(
                    "sweeps need a constant or diminishing schedule, not {}",
                    other.label()
                )))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn need<T: Copy>(value: Option<T>, key: &str) -> Result<T> {
        value.ok_or_else(|| OpcaError::Config(format!("data.{key} is required for this data kind")))
    }

    fn build_model(&self) -> Result<CovarianceModel> {
        let d = &self.data;
        let seed = d.seed.unwrap_or(self.run.base_seed);
        let n = Self::need(d.n, "n")?;
        let lo = Self::need(d.mu_min, "mu_min")?;
        let hi = Self::need(d.mu_max, "mu_max")?;
        let model = match d.kind {
            DataKind::GauGap1 => make_gau_gap_1(n, d.p, lo, hi, d.rho, seed),
            DataKind::GauGap2 => {
                make_gau_gap_2(n, d.p, Self::need(d.p1, "p1")?, lo, hi, d.rho, seed)
            }
            DataKind::GauNgap => make_gau_ngap(
                n,
                d.p,
                Self::need(d.p_prime, "p_prime")?,
                lo,
                hi,
                d.rho,
                seed,
            ),
            DataKind::File => unreachable!("file data has no model"),
        }
        .map_err(|e| match e {
            OpcaError::BadRange(msg) => OpcaError::Config(msg),
            other => other,
        })?;
        Ok(match d.basis {
            Basis::Random => model,
            Basis::Axis => model.into_axis_aligned(),
        })
    }
}

/// Where samples come from once the config is resolved.
#[derive(Debug, Clone)]
pub enum DataSource {
    Model(CovarianceModel),
    /// Samples as columns, centered when configured.
    Columns(Matrix),
}

/// Stepsize policy with every oracle quantity filled in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Constant(f64),
    Diminishing(DiminishingParams),
    AdaOja { b0: f64 },
    AdaSgn,
}

/// A validated config with its data, ground truth and schedule resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub source: DataSource,
    pub truth: GroundTruth,
    pub kind: StepsizeKind,
    pub schedule: ScheduleSpec,
    pub correction: CorrectionPolicy,
    pub num_batches: usize,
    pub record_every: usize,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let p = config.data.p;
        let (source, truth) = match config.data.kind {
            DataKind::File => {
                let path = config.data.path.as_ref().ok_or_else(|| {
                    OpcaError::Config("data.path is required for file data".into())
                })?;
                let format = config.data.format.ok_or_else(|| {
                    OpcaError::Config("data.format is required for file data".into())
                })?;
                let mut a = load_matrix_file(path, format)?;
                if config.data.center {
                    a = center_columns(&a);
                }
                if config.run.m > a.ncols() {
                    return Err(OpcaError::Config(format!(
                        "run.m = {} exceeds the {} samples in {}",
                        config.run.m,
                        a.ncols(),
                        path.display()
                    )));
                }
                let eig = symmetric_eig(&empirical_covariance(&a))?;
                let truth = GroundTruth::from_eig(&eig, p)?;
                (DataSource::Columns(a), truth)
            }
            _ => {
                let model = config.build_model()?;
                let truth = GroundTruth::from_model(&model, p)?;
                (DataSource::Model(model), truth)
            }
        };
        if truth.u_pprime.nrows() <= p {
            return Err(OpcaError::Config(format!(
                "data.p = {p} must be below the dimension {}",
                truth.u_pprime.nrows()
            )));
        }

        let kind = config.stepsize_kind()?;
        let num_batches = config.num_batches();
        let st = &config.stepsize;
        let schedule =
            match kind {
                StepsizeKind::Constant => ScheduleSpec::Constant(st.alpha.expect("validated")),
                StepsizeKind::Diminishing => ScheduleSpec::Diminishing(
                    config.diminishing_params(st.gamma.expect("validated"))?,
                ),
                StepsizeKind::PaperConstant => ScheduleSpec::Constant(paper_constant_alpha(
                    num_batches,
                    truth.lambda_p(),
                    truth.nu,
                )?),
                StepsizeKind::PaperDiminishing => ScheduleSpec::Diminishing(
                    paper_diminishing_params(num_batches, truth.lambda_p(), truth.nu)?,
                ),
                StepsizeKind::Adaoja => ScheduleSpec::AdaOja {
                    b0: st.b0.unwrap_or(ADAOJA_B0),
                },
                StepsizeKind::Adasgn => ScheduleSpec::AdaSgn,
            };

        let lambda_1 = truth.lambda_1();
        let lambda_n = truth.lambda_n();
        let mut correction = if lambda_n > 0.0 {
            CorrectionPolicy::from_spectrum(lambda_1, lambda_n)
        } else {
            CorrectionPolicy {
                threshold: FLAT_CORRECTION_THRESHOLD,
                theta: (crate::metrics::default_tolerance(&truth.lambda)).sqrt(),
                q_choice: QChoice::TailLeftSingular,
            }
        };
        correction.q_choice = config.correction.q_choice;
        if let Some(t) = config.correction.threshold {
            correction.threshold = t;
        }
        if let Some(t) = config.correction.theta {
            correction.theta = t;
        }

        let record_every = config.record_every();
        Ok(Experiment {
            config,
            source,
            truth,
            kind,
            schedule,
            correction,
            num_batches,
            record_every,
        })
    }

    pub fn dim(&self) -> usize {
        self.truth.u_pprime.nrows()
    }

    pub fn model(&self) -> Option<&CovarianceModel> {
        match &self.source {
            DataSource::Model(m) => Some(m),
            DataSource::Columns(_) => None,
        }
    }
}
