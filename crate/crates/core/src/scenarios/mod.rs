//! Experimental protocols: cross-validation variants, undersampling grids,
//! and the model-routed acquisition simulation.
//!
//! Every runner is a deterministic function of the corpus, the config and the
//! master seed. Fold assignment and per-job training seeds are derived from
//! the master seed with [`derive_seed`](crate::seed::derive_seed), so results
//! do not depend on how many threads execute the jobs.

mod acquisition;
mod cv;
mod diversity;
pub mod folds;
mod learner;
mod manifest;
mod output;
mod report;

pub use acquisition::{
    estimate_cost, simulate_acquisition, AcquisitionPlan, CostReport, Route, SimulationOutcome,
};
pub use cv::{incremental, run_cv, self_supervised, single_vs_multi, threshold_sweep, CvRun};
pub use diversity::{diversity_grid, round_robin_sample, GridCell, GridReport};
pub use folds::FoldPlan;
pub use learner::{
    ConstantLearner, FitJob, ImportedLearner, Learner, LinearLearner, OracleLearner,
};
pub use manifest::{sha256_file, sha256_hex, InputDigest, RunManifest};
pub use output::{write_metrics_csv, write_outputs, write_plan_csv};
pub use report::{
    summarize, MetricSummary, PairTest, ScenarioReport, SignificanceMatrix, VariantReport,
};

use crate::corpus::{Corpus, CorpusError};
use crate::metrics::MetricsError;
use crate::predictor::{Mode, PredictorError, TrainConfig, ValueConfig};
use crate::seed::derive_seed;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("need at least {needed} texts with annotations, got {got}")]
    TooFewTexts { needed: usize, got: usize },
    #[error("need at least 2 tasks, got {0}")]
    TooFewTasks(usize),
    #[error("seed and candidate corpora have different task schemas")]
    SchemaMismatch,
    #[error("price per label must be positive and finite, got {0}")]
    InvalidPrice(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ScenarioError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioError::TooFewTexts { .. } => "TooFewTexts",
            ScenarioError::TooFewTasks(_) => "TooFewTasks",
            ScenarioError::SchemaMismatch => "SchemaMismatch",
            ScenarioError::InvalidPrice(_) => "InvalidPrice",
            ScenarioError::InvalidConfig(_) => "InvalidConfig",
            ScenarioError::Grid(_) => "GridMismatch",
            ScenarioError::Predictor(e) => e.kind(),
            ScenarioError::Metrics(_) => "Metrics",
            ScenarioError::Corpus(_) => "Corpus",
            ScenarioError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PlainCv,
    SelfSupervised,
    Incremental,
    ThresholdSweep,
    SingleVsMulti,
    DiversityGrid,
    Simulate,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::PlainCv,
        ScenarioKind::SelfSupervised,
        ScenarioKind::Incremental,
        ScenarioKind::ThresholdSweep,
        ScenarioKind::SingleVsMulti,
        ScenarioKind::DiversityGrid,
        ScenarioKind::Simulate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::PlainCv => "plain_cv",
            ScenarioKind::SelfSupervised => "self_supervised",
            ScenarioKind::Incremental => "incremental",
            ScenarioKind::ThresholdSweep => "threshold_sweep",
            ScenarioKind::SingleVsMulti => "single_vs_multi",
            ScenarioKind::DiversityGrid => "diversity_grid",
            ScenarioKind::Simulate => "simulate",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.as_str()).collect();
                format!(
                    "unknown scenario {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }
}

/// Undersampling grid settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Numbers of texts `M`.
    pub texts: Vec<usize>,
    /// Annotation budgets `N`, counted in (text, annotator) pairs.
    pub annotations: Vec<usize>,
    pub n_folds: usize,
    pub value: ValueConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            texts: vec![30, 60, 90, 120],
            annotations: vec![100, 200, 300, 500, 700, 900],
            n_folds: 5,
            value: ValueConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub price_per_label: f64,
    /// Labels bought per human-routed cell; defaults to the candidates'
    /// average number of annotators per text.
    pub annotators_per_text: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            price_per_label: 0.012,
            annotators_per_text: None,
        }
    }
}

/// One JSON document describing a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// Master seed.
    pub seed: u64,
    /// VTL threshold for every scenario except the sweep.
    pub threshold: f64,
    pub thresholds: Vec<f64>,
    pub n_folds: usize,
    /// Training sizes, in folds, for the incremental scenario.
    pub train_fold_counts: Vec<usize>,
    pub mode: Mode,
    pub train: TrainConfig,
    /// Family-wise significance level before Bonferroni correction.
    pub alpha: f64,
    pub grid: GridConfig,
    pub simulate: SimulateConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::PlainCv,
            seed: 0,
            threshold: 0.25,
            thresholds: vec![0.10, 0.15, 0.20, 0.25],
            n_folds: 10,
            train_fold_counts: (1..=8).collect(),
            mode: Mode::MultiTask,
            train: TrainConfig::default(),
            alpha: 0.05,
            grid: GridConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::InvalidConfig(msg));
        let in_unit = |t: f64| (0.0..=1.0).contains(&t);
        if !in_unit(self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.thresholds.is_empty() {
            return bad("thresholds must not be empty".into());
        }
        if let Some(t) = self.thresholds.iter().find(|t| !in_unit(**t)) {
            return bad(format!("threshold {t} outside [0, 1]"));
        }
        if self.n_folds < 3 {
            return bad(format!("n_folds must be at least 3, got {}", self.n_folds));
        }
        if self.train_fold_counts.is_empty() {
            return bad("train_fold_counts must not be empty".into());
        }
        let max_train = self.n_folds - 2;
        if let Some(k) = self
            .train_fold_counts
            .iter()
            .find(|&&k| k == 0 || k > max_train)
        {
            return bad(format!("train fold count {k} outside [1, {max_train}]"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.train.learning_rate
            ));
        }
        if self.grid.texts.is_empty() || self.grid.annotations.is_empty() {
            return bad("grid texts and annotations must not be empty".into());
        }
        if self.grid.texts.contains(&0) || self.grid.annotations.contains(&0) {
            return bad("grid sizes must be positive".into());
        }
        if self.grid.n_folds < 3 {
            return bad(format!(
                "grid n_folds must be at least 3, got {}",
                self.grid.n_folds
            ));
        }
        if !(self.grid.value.lambda >= 0.0 && self.grid.value.lambda.is_finite()) {
            return bad(format!(
                "ridge lambda {} must be non-negative",
                self.grid.value.lambda
            ));
        }
        Ok(())
    }

    /// Seed of the fold shuffle.
    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, &[SPLIT_STREAM])
    }

    /// Seed of the model trained in CV iteration `iteration`.
    pub fn train_seed(&self, iteration: usize) -> u64 {
        derive_seed(self.seed, &[TRAIN_STREAM, iteration as u64])
    }
}

const SPLIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

/// Runs any corpus-only scenario. `learner` replaces the built-in model for
/// the CV-based scenarios; single-vs-multi and the grid always use the
/// built-in models. Simulation needs a candidate corpus and is run through
/// [`simulate_acquisition`] instead.
pub fn run_scenario(
    corpus: &Corpus,
    config: &ScenarioConfig,
    learner: Option<&dyn Learner>,
) -> Result<ScenarioReport, ScenarioError> {
    config.validate()?;
    let linear = LinearLearner {
        mode: config.mode,
        config: config.train.clone(),
    };
    let learner: &dyn Learner = learner.unwrap_or(&linear);
    match config.scenario {
        ScenarioKind::PlainCv => run_cv(corpus, config, learner),
        ScenarioKind::SelfSupervised => self_supervised(corpus, config, learner, learner),
        ScenarioKind::Incremental => incremental(corpus, config, learner),
        ScenarioKind::ThresholdSweep => threshold_sweep(corpus, config, learner),
        ScenarioKind::SingleVsMulti => single_vs_multi(corpus, config),
        ScenarioKind::DiversityGrid => diversity_grid(corpus, config),
        ScenarioKind::Simulate => Err(ScenarioError::InvalidConfig(
            "the simulate scenario needs a candidate corpus".into(),
        )),
    }
}
