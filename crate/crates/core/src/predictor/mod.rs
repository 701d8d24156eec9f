//! Predictors of valuable cells and of per-annotator values.
//!
//! The built-in models are hashed bag-of-words linear models. Predictions
//! from any external model can be brought in through
//! [`import_predictions`] as a `text_id,task,bit[,score]` CSV.

pub mod features;
mod import;
pub mod objective;
mod value_model;
mod vtl_model;

pub use features::{featurize, FeatureVector};
pub use import::{import_predictions, read_predictions};
pub use value_model::{
    annotator_feature, predict_value, train_value_model, TaskRegressor, ValueConfig, ValueModel,
};
pub use vtl_model::{
    featurize_corpus, predict_features, predict_vtl, train_vtl, Head, Mode, TrainConfig,
    TrainingData, VtlModel, DECISION_THRESHOLD, MODEL_FORMAT_VERSION,
};

use crate::corpus::{TaskId, TextId};
use fnv::FnvHashMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictorError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no training text has a defined label")]
    NoDefinedLabels,
    #[error("labels do not align with the corpus")]
    LabelGridMismatch,
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("prediction file misses cell ({0}, {1})")]
    MissingCell(TextId, TaskId),
    #[error("prediction file repeats cell ({0}, {1})")]
    DuplicateCell(TextId, TaskId),
    #[error("prediction file has cell ({0}, {1}) outside the requested grid")]
    UnexpectedCell(TextId, TaskId),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("model format: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl PredictorError {
    pub fn kind(&self) -> &'static str {
        match self {
            PredictorError::EmptyTrainingSet => "EmptyTrainingSet",
            PredictorError::NoDefinedLabels => "NoDefinedLabels",
            PredictorError::LabelGridMismatch => "LabelGridMismatch",
            PredictorError::UnknownTask(_) => "UnknownTask",
            PredictorError::MissingCell(..) => "MissingCell",
            PredictorError::DuplicateCell(..) => "DuplicateCell",
            PredictorError::UnexpectedCell(..) => "UnexpectedCell",
            PredictorError::MalformedRow { .. } => "MalformedRow",
            PredictorError::Format(_) => "ModelFormat",
            PredictorError::Io(_) => "Io",
        }
    }
}

/// Predicted bit and score per text × task, row-major.
///
/// Bits always equal `score >= 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    text_ids: Vec<TextId>,
    task_ids: Vec<TaskId>,
    scores: Vec<f64>,
    text_index: FnvHashMap<TextId, usize>,
    task_index: FnvHashMap<TaskId, usize>,
}

impl PredictionSet {
    pub fn from_scores(text_ids: Vec<TextId>, task_ids: Vec<TaskId>, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), text_ids.len() * task_ids.len());
        let text_index = text_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let task_index = task_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            text_ids,
            task_ids,
            scores,
            text_index,
            task_index,
        }
    }

    /// Hard predictions; scores are set to the bit value.
    pub fn from_bits(text_ids: Vec<TextId>, task_ids: Vec<TaskId>, bits: Vec<bool>) -> Self {
        let scores = bits.into_iter().map(|b| b as u8 as f64).collect();
        Self::from_scores(text_ids, task_ids, scores)
    }

    pub fn text_ids(&self) -> &[TextId] {
        &self.text_ids
    }

    pub fn task_ids(&self) -> &[TaskId] {
        &self.task_ids
    }

    pub fn text_idx(&self, id: &TextId) -> Option<usize> {
        self.text_index.get(id).copied()
    }

    pub fn task_idx(&self, id: &TaskId) -> Option<usize> {
        self.task_index.get(id).copied()
    }

    pub fn score(&self, text: usize, task: usize) -> f64 {
        self.scores[text * self.task_ids.len() + task]
    }

    pub fn bit(&self, text: usize, task: usize) -> bool {
        self.score(text, task) >= DECISION_THRESHOLD
    }

    /// Rows for the given text ids, in that order. `None` if any is missing.
    pub fn select(&self, texts: &[TextId]) -> Option<PredictionSet> {
        let k = self.task_ids.len();
        let mut scores = Vec::with_capacity(texts.len() * k);
        for t in texts {
            let row = self.text_idx(t)?;
            scores.extend_from_slice(&self.scores[row * k..(row + 1) * k]);
        }
        Some(Self::from_scores(
            texts.to_vec(),
            self.task_ids.clone(),
            scores,
        ))
    }

    /// Writes `text_id,task,bit,score`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["text_id", "task", "bit", "score"])?;
        for (d, text) in self.text_ids.iter().enumerate() {
            for (l, task) in self.task_ids.iter().enumerate() {
                w.write_record([
                    text.as_str(),
                    task.as_str(),
                    if self.bit(d, l) { "1" } else { "0" },
                    &self.score(d, l).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_follows_score() {
        let p = PredictionSet::from_scores(
            vec!["a".into(), "b".into()],
            vec!["l".into()],
            vec![0.5, 0.4999],
        );
        assert!(p.bit(0, 0));
        assert!(!p.bit(1, 0));
    }

    #[test]
    fn select_permutes_rows() {
        let p = PredictionSet::from_bits(
            vec!["a".into(), "b".into()],
            vec!["l".into(), "m".into()],
            vec![true, false, false, true],
        );
        let q = p.select(&["b".into(), "a".into()]).unwrap();
        assert!(!q.bit(0, 0) && q.bit(0, 1) && q.bit(1, 0) && !q.bit(1, 1));
        assert!(p.select(&["zz".into()]).is_none());
    }
}
