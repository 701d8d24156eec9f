//! Linear models predicting valuable-cell bits from text.
//!
//! Single-task mode trains one independent logistic regression per task.
//! Multi-task mode shares a trained linear bottleneck (`k` = 64 by default)
//! between per-task logistic heads. Rows of the bottleneck exist only for
//! hashed features seen during training; every other row is zero.

use super::features::FeatureVector;
use super::objective::{
    logistic_loss_grad, multitask_loss_grad, sigmoid, BinaryExample, MultiExample, MultiTaskParams,
    SparseRow,
};
use super::{PredictionSet, PredictorError};
use crate::corpus::{Corpus, TaskId, TextDoc};
use crate::metrics::macro_f1;
use crate::seed::derive_seed;
use crate::vtl::VtlLabels;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[serde(alias = "single")]
    SingleTask,
    #[serde(alias = "multi")]
    MultiTask,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "single_task" => Ok(Mode::SingleTask),
            "multi" | "multi_task" => Ok(Mode::MultiTask),
            other => Err(format!("unknown mode {other}")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::SingleTask => "single",
            Mode::MultiTask => "multi",
        })
    }
}

/// Optimizer settings for mini-batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size for the gradient of the loss summed over a batch.
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Epochs without validation macro-F1 improvement before stopping.
    pub patience: usize,
    /// Inverse-frequency class weights in the loss.
    pub class_weights: bool,
    pub bottleneck_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.1,
            weight_decay: 1e-4,
            patience: 10,
            class_weights: false,
            bottleneck_dim: 64,
        }
    }
}

/// What a VTL model is trained on: corpus texts with their features, the
/// target bits (aligned with corpus text order), and train/validation rows.
pub struct TrainingData<'a> {
    pub corpus: &'a Corpus,
    pub features: &'a [FeatureVector],
    pub labels: &'a VtlLabels,
    pub train: &'a [usize],
    pub validation: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// A trained VTL predictor. Serializes to a versioned JSON weight dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtlModel {
    pub format_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub task_ids: Vec<TaskId>,
    /// Sorted hashed feature indices with learned weights.
    pub vocabulary: Vec<u32>,
    /// `0` in single-task mode.
    pub bottleneck_dim: usize,
    /// `vocabulary.len() × bottleneck_dim`, row-major; empty in single-task mode.
    pub bottleneck: Vec<f64>,
    pub heads: Vec<Head>,
    /// Training objective per example after each epoch; one curve per optimized problem
    /// (one per task in single-task mode, one joint curve otherwise).
    pub training_loss: Vec<Vec<f64>>,
    /// Epoch whose parameters were kept, per curve.
    pub best_epoch: Vec<usize>,
}

pub fn featurize_corpus(corpus: &Corpus) -> Vec<FeatureVector> {
    corpus
        .texts()
        .iter()
        .map(|t| super::features::featurize(&t.content))
        .collect()
}

fn compact(vocab: &[u32], x: &FeatureVector) -> SparseRow {
    x.entries
        .iter()
        .filter_map(|&(i, v)| vocab.binary_search(&i).ok().map(|j| (j, v)))
        .collect()
}

fn class_weight_pair(ys: impl Iterator<Item = bool>, enabled: bool) -> (f64, f64) {
    if !enabled {
        return (1.0, 1.0);
    }
    let (mut pos, mut n) = (0usize, 0usize);
    for y in ys {
        n += 1;
        pos += y as usize;
    }
    let neg = n - pos;
    let w = |c: usize| {
        if c == 0 {
            1.0
        } else {
            n as f64 / (2.0 * c as f64)
        }
    };
    (w(neg), w(pos))
}

fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size.max(1))
}

/// Trains a VTL model. Deterministic given the inputs and `seed`.
pub fn train_vtl(
    data: &TrainingData<'_>,
    mode: Mode,
    config: &TrainConfig,
    seed: u64,
) -> Result<VtlModel, PredictorError> {
    if data.labels.n_texts() != data.corpus.n_texts()
        || data.labels.n_tasks() != data.corpus.n_tasks()
    {
        return Err(PredictorError::LabelGridMismatch);
    }
    if data.train.is_empty() {
        return Err(PredictorError::EmptyTrainingSet);
    }
    let rows: Vec<usize> = data
        .train
        .iter()
        .copied()
        .filter(|&d| data.labels.row(d).iter().any(|b| b.is_some()))
        .collect();
    if rows.is_empty() {
        return Err(PredictorError::NoDefinedLabels);
    }
    if rows.len() < data.train.len() {
        log::debug!(
            "{} training texts have no defined labels and were skipped",
            data.train.len() - rows.len()
        );
    }
    let mut vocabulary: Vec<u32> = rows
        .iter()
        .flat_map(|&d| data.features[d].entries.iter().map(|(i, _)| *i))
        .collect();
    vocabulary.sort_unstable();
    vocabulary.dedup();

    let x_train: Vec<SparseRow> = rows
        .iter()
        .map(|&d| compact(&vocabulary, &data.features[d]))
        .collect();
    let x_val: Vec<SparseRow> = data
        .validation
        .iter()
        .map(|&d| compact(&vocabulary, &data.features[d]))
        .collect();

    let task_ids = data.corpus.task_ids();
    match mode {
        Mode::SingleTask => {
            let results: Vec<(Head, Vec<f64>, usize)> = (0..task_ids.len())
                .into_par_iter()
                .map(|l| {
                    train_head(
                        data,
                        &rows,
                        &x_train,
                        &x_val,
                        l,
                        vocabulary.len(),
                        config,
                        derive_seed(seed, &[l as u64]),
                    )
                })
                .collect();
            let mut heads = Vec::new();
            let mut training_loss = Vec::new();
            let mut best_epoch = Vec::new();
            for (h, loss, best) in results {
                heads.push(h);
                training_loss.push(loss);
                best_epoch.push(best);
            }
            Ok(VtlModel {
                format_version: MODEL_FORMAT_VERSION,
                mode,
                seed,
                task_ids,
                vocabulary,
                bottleneck_dim: 0,
                bottleneck: Vec::new(),
                heads,
                training_loss,
                best_epoch,
            })
        }
        Mode::MultiTask => {
            let (params, loss, best) = train_multitask(
                data,
                &rows,
                &x_train,
                &x_val,
                vocabulary.len(),
                config,
                seed,
            );
            let heads = params
                .heads
                .iter()
                .zip(&params.biases)
                .map(|(w, b)| Head {
                    weights: w.clone(),
                    bias: *b,
                })
                .collect();
            Ok(VtlModel {
                format_version: MODEL_FORMAT_VERSION,
                mode,
                seed,
                task_ids,
                vocabulary,
                bottleneck_dim: params.k,
                bottleneck: params.bottleneck,
                heads,
                training_loss: vec![loss],
                best_epoch: vec![best],
            })
        }
    }
}

/// Keeps the best parameters seen by validation score and decides when to stop.
struct EarlyStopper<P> {
    best_score: f64,
    best: Option<P>,
    best_epoch: usize,
    since_best: usize,
    patience: usize,
}

impl<P: Clone> EarlyStopper<P> {
    fn new(patience: usize) -> Self {
        Self {
            best_score: f64::NEG_INFINITY,
            best: None,
            best_epoch: 0,
            since_best: 0,
            patience,
        }
    }

    /// Returns `true` when training should stop.
    fn observe(&mut self, epoch: usize, score: Option<f64>, params: &P) -> bool {
        let Some(score) = score else {
            self.best = Some(params.clone());
            self.best_epoch = epoch;
            return false;
        };
        if score > self.best_score {
            self.best_score = score;
            self.best = Some(params.clone());
            self.best_epoch = epoch;
            self.since_best = 0;
            false
        } else {
            self.since_best += 1;
            self.since_best >= self.patience
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn train_head(
    data: &TrainingData<'_>,
    rows: &[usize],
    x_train: &[SparseRow],
    x_val: &[SparseRow],
    task: usize,
    dim: usize,
    config: &TrainConfig,
    seed: u64,
) -> (Head, Vec<f64>, usize) {
    let labelled: Vec<(usize, bool)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| data.labels.get(d, task).map(|y| (i, y)))
        .collect();
    let (w_neg, w_pos) = class_weight_pair(labelled.iter().map(|(_, y)| *y), config.class_weights);
    let examples: Vec<BinaryExample> = labelled
        .iter()
        .map(|&(i, y)| BinaryExample {
            x: x_train[i].clone(),
            y,
            weight: if y { w_pos } else { w_neg },
        })
        .collect();
    let val: Vec<(usize, bool)> = data
        .validation
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| data.labels.get(d, task).map(|y| (i, y)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut curve = Vec::with_capacity(config.epochs);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let all: Vec<&BinaryExample> = examples.iter().collect();

    for epoch in 0..config.epochs {
        if examples.is_empty() {
            break;
        }
        order.shuffle(&mut rng);
        for batch in batches(&order, config.batch_size) {
            let refs: Vec<&BinaryExample> = batch.iter().map(|&i| &examples[i]).collect();
            let g = logistic_loss_grad(&weights, bias, &refs, config.weight_decay);
            for (w, gw) in weights.iter_mut().zip(&g.weights) {
                *w -= config.learning_rate * gw;
            }
            bias -= config.learning_rate * g.bias;
        }
        curve.push(
            logistic_loss_grad(&weights, bias, &all, config.weight_decay).loss / all.len() as f64,
        );

        let score = (!val.is_empty()).then(|| {
            let truth: Vec<bool> = val.iter().map(|(_, y)| *y).collect();
            let pred: Vec<bool> = val
                .iter()
                .map(|(i, _)| {
                    let z: f64 = x_val[*i].iter().map(|&(j, v)| v * weights[j]).sum::<f64>() + bias;
                    sigmoid(z) >= DECISION_THRESHOLD
                })
                .collect();
            macro_f1(&truth, &pred).unwrap_or(0.0)
        });
        if stopper.observe(epoch, score, &(weights.clone(), bias)) {
            break;
        }
    }
    let (weights, bias) = stopper.best.unwrap_or((weights, bias));
    (Head { weights, bias }, curve, stopper.best_epoch)
}

fn init_multitask(dim: usize, k: usize, n_tasks: usize, rng: &mut ChaCha8Rng) -> MultiTaskParams {
    let b_scale = (3.0 / k as f64).sqrt();
    let h_scale = (3.0 / k as f64).sqrt();
    MultiTaskParams {
        dim,
        k,
        bottleneck: (0..dim * k)
            .map(|_| rng.random_range(-b_scale..b_scale))
            .collect(),
        heads: (0..n_tasks)
            .map(|_| {
                (0..k)
                    .map(|_| rng.random_range(-h_scale..h_scale))
                    .collect()
            })
            .collect(),
        biases: vec![0.0; n_tasks],
    }
}

fn train_multitask(
    data: &TrainingData<'_>,
    rows: &[usize],
    x_train: &[SparseRow],
    x_val: &[SparseRow],
    dim: usize,
    config: &TrainConfig,
    seed: u64,
) -> (MultiTaskParams, Vec<f64>, usize) {
    let n_tasks = data.labels.n_tasks();
    let class_w: Vec<(f64, f64)> = (0..n_tasks)
        .map(|l| {
            class_weight_pair(
                rows.iter().filter_map(|&d| data.labels.get(d, l)),
                config.class_weights,
            )
        })
        .collect();
    let examples: Vec<MultiExample> = rows
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let targets = data.labels.row(d).to_vec();
            let weights = targets
                .iter()
                .zip(&class_w)
                .map(|(t, (wn, wp))| if *t == Some(true) { *wp } else { *wn })
                .collect();
            MultiExample {
                x: x_train[i].clone(),
                targets,
                weights,
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.bottleneck_dim.max(1);
    let mut params = init_multitask(dim, k, n_tasks, &mut rng);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let all: Vec<&MultiExample> = examples.iter().collect();
    let lr = config.learning_rate;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in batches(&order, config.batch_size) {
            let refs: Vec<&MultiExample> = batch.iter().map(|&i| &examples[i]).collect();
            let (_, g) = multitask_loss_grad(&params, &refs, config.weight_decay);
            for (w, gw) in params.bottleneck.iter_mut().zip(&g.bottleneck) {
                *w -= lr * gw;
            }
            for (h, gh) in params.heads.iter_mut().zip(&g.heads) {
                for (w, gw) in h.iter_mut().zip(gh) {
                    *w -= lr * gw;
                }
            }
            for (b, gb) in params.biases.iter_mut().zip(&g.biases) {
                *b -= lr * gb;
            }
        }
        curve.push(multitask_loss_grad(&params, &all, config.weight_decay).0 / all.len() as f64);

        let score = validation_score(data, x_val, n_tasks, |x, l| {
            let h = params.hidden(x);
            sigmoid(params.logit(&h, l)) >= DECISION_THRESHOLD
        });
        if stopper.observe(epoch, score, &params) {
            break;
        }
    }
    let params = stopper.best.unwrap_or(params);
    (params, curve, stopper.best_epoch)
}

/// Mean macro-F1 over tasks with validation labels; `None` without validation data.
fn validation_score(
    data: &TrainingData<'_>,
    x_val: &[SparseRow],
    n_tasks: usize,
    predict: impl Fn(&[(usize, f64)], usize) -> bool,
) -> Option<f64> {
    let mut scores = Vec::new();
    for l in 0..n_tasks {
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for (i, &d) in data.validation.iter().enumerate() {
            if let Some(y) = data.labels.get(d, l) {
                truth.push(y);
                pred.push(predict(&x_val[i], l));
            }
        }
        if let Ok(f) = macro_f1(&truth, &pred) {
            scores.push(f);
        }
    }
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

impl VtlModel {
    fn compact(&self, x: &FeatureVector) -> SparseRow {
        compact(&self.vocabulary, x)
    }

    /// Scores in task order for one feature vector.
    pub fn scores(&self, x: &FeatureVector) -> Vec<f64> {
        let row = self.compact(x);
        match self.mode {
            Mode::SingleTask => self
                .heads
                .iter()
                .map(|h| {
                    let z: f64 = row.iter().map(|&(j, v)| v * h.weights[j]).sum::<f64>() + h.bias;
                    sigmoid(z)
                })
                .collect(),
            Mode::MultiTask => {
                let k = self.bottleneck_dim;
                let mut hidden = vec![0.0; k];
                for &(j, v) in &row {
                    for (hh, b) in hidden.iter_mut().zip(&self.bottleneck[j * k..(j + 1) * k]) {
                        *hh += v * b;
                    }
                }
                self.heads
                    .iter()
                    .map(|h| {
                        let z: f64 = h
                            .weights
                            .iter()
                            .zip(&hidden)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            + h.bias;
                        sigmoid(z)
                    })
                    .collect()
            }
        }
    }

    pub fn save_json<W: Write>(&self, out: W) -> Result<(), PredictorError> {
        serde_json::to_writer(out, self).map_err(|e| PredictorError::Format(e.to_string()))
    }

    pub fn load_json<R: Read>(input: R) -> Result<VtlModel, PredictorError> {
        let m: VtlModel =
            serde_json::from_reader(input).map_err(|e| PredictorError::Format(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(PredictorError::Format(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// Predicts bits and scores for every text × task.
pub fn predict_vtl(model: &VtlModel, texts: &[TextDoc]) -> PredictionSet {
    let feats: Vec<FeatureVector> = texts
        .iter()
        .map(|t| super::features::featurize(&t.content))
        .collect();
    predict_features(
        model,
        texts.iter().map(|t| t.text_id.clone()).collect(),
        &feats,
    )
}

/// Like [`predict_vtl`] over precomputed features.
pub fn predict_features(
    model: &VtlModel,
    text_ids: Vec<crate::corpus::TextId>,
    features: &[FeatureVector],
) -> PredictionSet {
    let scores: Vec<f64> = features.iter().flat_map(|x| model.scores(x)).collect();
    PredictionSet::from_scores(text_ids, model.task_ids.clone(), scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationRecord, MlKind, TaskSchema, TextDoc};
    use crate::vtl::{labels_for, Threshold};

    fn separable() -> (Corpus, VtlLabels) {
        let c = Corpus::new(
            vec![TextDoc::new("p", "xx xx xx"), TextDoc::new("n", "yy yy")],
            vec![TaskSchema::new("l", 0, 1, MlKind::Binary)],
            vec![
                AnnotationRecord::new("p", "u", "l", 1),
                AnnotationRecord::new("n", "u", "l", 0),
            ],
        )
        .unwrap();
        let labels = labels_for(&c, Threshold::new(0.5).unwrap());
        (c, labels)
    }

    #[test]
    fn separable_pair_is_learned() {
        let (c, labels) = separable();
        let feats = featurize_corpus(&c);
        let data = TrainingData {
            corpus: &c,
            features: &feats,
            labels: &labels,
            train: &[0, 1],
            validation: &[],
        };
        for mode in [Mode::SingleTask, Mode::MultiTask] {
            let cfg = TrainConfig {
                epochs: 50,
                ..Default::default()
            };
            let m = train_vtl(&data, mode, &cfg, 1).unwrap();
            let p = predict_vtl(&m, c.texts());
            assert!(p.bit(0, 0), "{mode}");
            assert!(!p.bit(1, 0), "{mode}");
            let curve = &m.training_loss[0];
            assert!(curve.last().unwrap() < curve.first().unwrap());
        }
    }

    #[test]
    fn empty_text_scores_bias() {
        let (c, labels) = separable();
        let feats = featurize_corpus(&c);
        let data = TrainingData {
            corpus: &c,
            features: &feats,
            labels: &labels,
            train: &[0, 1],
            validation: &[],
        };
        let m = train_vtl(&data, Mode::SingleTask, &TrainConfig::default(), 1).unwrap();
        let p = predict_vtl(&m, &[TextDoc::new("e", "")]);
        assert_eq!(p.score(0, 0), sigmoid(m.heads[0].bias));
    }

    #[test]
    fn errors() {
        let (c, labels) = separable();
        let feats = featurize_corpus(&c);
        let data = TrainingData {
            corpus: &c,
            features: &feats,
            labels: &labels,
            train: &[],
            validation: &[],
        };
        assert!(matches!(
            train_vtl(&data, Mode::SingleTask, &TrainConfig::default(), 0),
            Err(PredictorError::EmptyTrainingSet)
        ));
        let undefined = labels.relabel(|_, _| false);
        let none = VtlLabels::from_bits(
            undefined.threshold,
            undefined.text_ids.clone(),
            undefined.task_ids.clone(),
            vec![None, None],
        );
        let data = TrainingData {
            corpus: &c,
            features: &feats,
            labels: &none,
            train: &[0, 1],
            validation: &[],
        };
        assert!(matches!(
            train_vtl(&data, Mode::MultiTask, &TrainConfig::default(), 0),
            Err(PredictorError::NoDefinedLabels)
        ));
    }
}
