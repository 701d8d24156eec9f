//! Pluggable predictors for the scenario runners.

use super::ScenarioError;
use crate::corpus::{Corpus, TextId};
use crate::predictor::{
    predict_features, train_vtl, FeatureVector, Mode, PredictionSet, TrainConfig, TrainingData,
};
use crate::vtl::VtlLabels;

/// One fit-and-predict job: train on `train` (validating on `validation`)
/// against `labels`, then predict every task for the `test` texts.
pub struct FitJob<'a> {
    pub corpus: &'a Corpus,
    pub features: &'a [FeatureVector],
    /// Training targets, aligned with corpus text order.
    pub labels: &'a VtlLabels,
    pub train: &'a [usize],
    pub validation: &'a [usize],
    pub test: &'a [usize],
    pub seed: u64,
}

impl FitJob<'_> {
    pub fn test_ids(&self) -> Vec<TextId> {
        self.test
            .iter()
            .map(|&d| self.corpus.texts()[d].text_id.clone())
            .collect()
    }
}

pub trait Learner: Sync {
    fn fit_predict(&self, job: &FitJob<'_>) -> Result<PredictionSet, ScenarioError>;
}

/// The built-in hashed bag-of-words model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLearner {
    pub mode: Mode,
    pub config: TrainConfig,
}

impl Learner for LinearLearner {
    fn fit_predict(&self, job: &FitJob<'_>) -> Result<PredictionSet, ScenarioError> {
        let data = TrainingData {
            corpus: job.corpus,
            features: job.features,
            labels: job.labels,
            train: job.train,
            validation: job.validation,
        };
        let model = train_vtl(&data, self.mode, &self.config, job.seed)?;
        let feats: Vec<FeatureVector> = job.test.iter().map(|&d| job.features[d].clone()).collect();
        Ok(predict_features(&model, job.test_ids(), &feats))
    }
}

/// Predicts the held truth. Undefined cells are routed to humans.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLearner {
    pub truth: VtlLabels,
}

impl Learner for OracleLearner {
    fn fit_predict(&self, job: &FitJob<'_>) -> Result<PredictionSet, ScenarioError> {
        let n_tasks = self.truth.n_tasks();
        let index: fnv::FnvHashMap<&TextId, usize> = self
            .truth
            .text_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        let ids = job.test_ids();
        let mut bits = Vec::with_capacity(ids.len() * n_tasks);
        for id in &ids {
            let row = *index
                .get(id)
                .ok_or_else(|| ScenarioError::Grid(format!("oracle has no truth for text {id}")))?;
            bits.extend(self.truth.row(row).iter().map(|b| b.unwrap_or(true)));
        }
        Ok(PredictionSet::from_bits(
            ids,
            self.truth.task_ids.clone(),
            bits,
        ))
    }
}

/// Predicts the same bit everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantLearner(pub bool);

impl Learner for ConstantLearner {
    fn fit_predict(&self, job: &FitJob<'_>) -> Result<PredictionSet, ScenarioError> {
        let ids = job.test_ids();
        let n = ids.len() * job.corpus.n_tasks();
        Ok(PredictionSet::from_bits(
            ids,
            job.corpus.task_ids(),
            vec![self.0; n],
        ))
    }
}

/// Serves rows of an externally produced prediction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedLearner {
    pub predictions: PredictionSet,
}

impl Learner for ImportedLearner {
    fn fit_predict(&self, job: &FitJob<'_>) -> Result<PredictionSet, ScenarioError> {
        let ids = job.test_ids();
        self.predictions
            .select(&ids)
            .ok_or_else(|| ScenarioError::Grid("imported predictions miss a test text".into()))
    }
}
