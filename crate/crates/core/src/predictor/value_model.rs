//! Personalized per-task value regression.
//!
//! Each task gets a ridge regression over the hashed text features
//! concatenated with a hashed annotator-id block of `2^12` buckets, so the
//! same text can receive different predictions for different annotators.
//! This is one plausible reading of a "user id" personalized model; the
//! intercept is not penalized. The normal equations are solved with
//! conjugate gradients over the features actually present in training.

use super::features::{featurize, stable_hash, FeatureVector, TEXT_DIM};
use super::PredictorError;
use crate::corpus::{AnnotatorId, Corpus, TaskId, TaskSchema};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const ANNOTATOR_DIM: u32 = 1 << 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueConfig {
    /// Ridge penalty on all weights except the intercept.
    pub lambda: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ValueConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iterations: 500,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRegressor {
    pub schema: TaskSchema,
    /// Sorted global feature indices (text block, then annotator block).
    pub vocabulary: Vec<u32>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueModel {
    pub lambda: f64,
    pub tasks: Vec<TaskRegressor>,
}

pub fn annotator_feature(annotator: &AnnotatorId) -> u32 {
    TEXT_DIM + (stable_hash(annotator.as_str()) % ANNOTATOR_DIM as u64) as u32
}

fn with_annotator(text: &FeatureVector, annotator: &AnnotatorId) -> FeatureVector {
    let mut entries = text.entries.clone();
    entries.push((annotator_feature(annotator), 1.0));
    FeatureVector { entries }
}

/// Trains one regressor per task on every annotation record of the corpus.
/// A task without records predicts 0, the irrelevant class.
pub fn train_value_model(corpus: &Corpus, config: &ValueConfig) -> ValueModel {
    let text_feats: Vec<FeatureVector> = corpus
        .texts()
        .iter()
        .map(|t| featurize(&t.content))
        .collect();
    let tasks = corpus
        .tasks()
        .par_iter()
        .enumerate()
        .map(|(l, schema)| {
            let (xs, ys): (Vec<FeatureVector>, Vec<f64>) = corpus
                .annotations()
                .iter()
                .filter(|a| a.task == l)
                .map(|a| {
                    (
                        with_annotator(&text_feats[a.text], &corpus.annotators()[a.annotator]),
                        a.value as f64,
                    )
                })
                .unzip();
            fit_ridge(schema.clone(), &xs, &ys, config)
        })
        .collect();
    ValueModel {
        lambda: config.lambda,
        tasks,
    }
}

fn fit_ridge(
    schema: TaskSchema,
    xs: &[FeatureVector],
    ys: &[f64],
    config: &ValueConfig,
) -> TaskRegressor {
    if ys.is_empty() {
        return TaskRegressor {
            schema,
            vocabulary: Vec::new(),
            weights: Vec::new(),
            intercept: 0.0,
        };
    }
    let mut vocabulary: Vec<u32> = xs
        .iter()
        .flat_map(|x| x.entries.iter().map(|(i, _)| *i))
        .collect();
    vocabulary.sort_unstable();
    vocabulary.dedup();
    let rows: Vec<Vec<(usize, f64)>> = xs
        .iter()
        .map(|x| {
            x.entries
                .iter()
                .map(|&(i, v)| (vocabulary.binary_search(&i).unwrap(), v))
                .collect()
        })
        .collect();
    let p = vocabulary.len();
    // unknowns: p weights then the intercept
    let apply = |theta: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; p + 1];
        for row in &rows {
            let r: f64 = row.iter().map(|&(j, v)| v * theta[j]).sum::<f64>() + theta[p];
            for &(j, v) in row {
                out[j] += v * r;
            }
            out[p] += r;
        }
        for j in 0..p {
            out[j] += config.lambda * theta[j];
        }
        out
    };
    let mut rhs = vec![0.0; p + 1];
    for (row, y) in rows.iter().zip(ys) {
        for &(j, v) in row {
            rhs[j] += v * y;
        }
        rhs[p] += y;
    }
    let theta = conjugate_gradient(apply, &rhs, config.max_iterations, config.tolerance);
    TaskRegressor {
        schema,
        vocabulary,
        weights: theta[..p].to_vec(),
        intercept: theta[p],
    }
}

/// Solves `A x = b` for symmetric positive definite `A` given as a closure.
fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    max_iterations: usize,
    tolerance: f64,
) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut d = r.clone();
    let b_norm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    for _ in 0..max_iterations {
        if rr.sqrt() <= tolerance * b_norm {
            break;
        }
        let ad = apply(&d);
        let alpha = rr / dot(&d, &ad);
        for i in 0..x.len() {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..d.len() {
            d[i] = r[i] + beta * d[i];
        }
        rr = rr_next;
    }
    x
}

impl ValueModel {
    fn regressor(&self, task: &TaskId) -> Result<&TaskRegressor, PredictorError> {
        self.tasks
            .iter()
            .find(|t| &t.schema.task_id == task)
            .ok_or_else(|| PredictorError::UnknownTask(task.clone()))
    }

    /// Predicted value, clipped to the task's domain.
    pub fn predict_features(
        &self,
        text: &FeatureVector,
        annotator: &AnnotatorId,
        task: &TaskId,
    ) -> Result<f64, PredictorError> {
        let reg = self.regressor(task)?;
        let x = with_annotator(text, annotator);
        let raw = x
            .entries
            .iter()
            .filter_map(|&(i, v)| {
                reg.vocabulary
                    .binary_search(&i)
                    .ok()
                    .map(|j| v * reg.weights[j])
            })
            .sum::<f64>()
            + reg.intercept;
        Ok(raw.clamp(reg.schema.lo as f64, reg.schema.hi as f64))
    }
}

/// Predicted value of `task` for `annotator` reading `text`, clipped to the task's domain.
pub fn predict_value(
    model: &ValueModel,
    text: &str,
    annotator: &AnnotatorId,
    task: &TaskId,
) -> Result<f64, PredictorError> {
    model.predict_features(&featurize(text), annotator, task)
}
