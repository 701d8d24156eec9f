//! Cross-validation scenarios.

use super::folds::FoldPlan;
use super::learner::{FitJob, Learner, LinearLearner};
use super::report::{significance, ScenarioReport, VariantReport};
use super::{ScenarioConfig, ScenarioError, ScenarioKind};
use crate::corpus::Corpus;
use crate::metrics::{evaluate, MetricReport};
use crate::predictor::{featurize_corpus, FeatureVector, Mode, PredictionSet};
use crate::vtl::{binarize_at, compute_fractions, Threshold, VtlLabels, VtlMatrix};
use indexmap::IndexMap;
use rayon::prelude::*;

/// Shared state of one cross-validated corpus: features, fractions and folds.
pub struct CvRun<'a> {
    pub corpus: &'a Corpus,
    pub config: &'a ScenarioConfig,
    pub features: Vec<FeatureVector>,
    pub matrix: VtlMatrix,
    pub plan: FoldPlan,
}

/// Output of one CV pass: per-fold reports and per-fold test predictions.
pub(crate) struct CvPass {
    pub reports: Vec<MetricReport>,
    pub predictions: Vec<PredictionSet>,
}

impl<'a> CvRun<'a> {
    /// Plans folds over texts with at least one annotation.
    pub fn new(corpus: &'a Corpus, config: &'a ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let matrix = compute_fractions(corpus);
        let eligible: Vec<bool> = (0..corpus.n_texts())
            .map(|d| (0..corpus.n_tasks()).any(|l| matrix.cell(d, l).is_defined()))
            .collect();
        let got = eligible.iter().filter(|e| **e).count();
        let plan = FoldPlan::new(&eligible, config.n_folds, config.split_seed()).ok_or(
            ScenarioError::TooFewTexts {
                needed: config.n_folds,
                got,
            },
        )?;
        if matrix.n_undefined() > 0 {
            log::warn!(
                "{} (text, task) cells have no annotations and are excluded from all metrics",
                matrix.n_undefined()
            );
        }
        Ok(Self {
            corpus,
            config,
            features: featurize_corpus(corpus),
            matrix,
            plan,
        })
    }

    pub fn labels(&self, threshold: f64) -> Result<VtlLabels, ScenarioError> {
        let t =
            Threshold::new(threshold).map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
        Ok(binarize_at(&self.matrix, t))
    }

    /// Trains on `train_labels`, evaluates on `truth`, fold by fold.
    /// `train_rows(i)` picks the training texts of iteration `i`.
    pub(crate) fn pass(
        &self,
        truth: &VtlLabels,
        train_labels: &VtlLabels,
        learner: &dyn Learner,
        train_rows: impl Fn(usize) -> Vec<usize> + Sync,
    ) -> Result<CvPass, ScenarioError> {
        let results: Vec<(MetricReport, PredictionSet)> = (0..self.plan.n_folds)
            .into_par_iter()
            .map(|i| {
                let test = self.plan.test(i);
                let validation = self.plan.validation(i);
                let train = train_rows(i);
                let job = FitJob {
                    corpus: self.corpus,
                    features: &self.features,
                    labels: train_labels,
                    train: &train,
                    validation: &validation,
                    test: &test,
                    seed: self.config.train_seed(i),
                };
                let pred = learner.fit_predict(&job)?;
                let report = evaluate(&truth.select_texts(&test), &pred)?;
                Ok((report, pred))
            })
            .collect::<Result<_, ScenarioError>>()?;
        let (reports, predictions) = results.into_iter().unzip();
        Ok(CvPass {
            reports,
            predictions,
        })
    }

    fn report(&self, scenario: ScenarioKind, variants: Vec<VariantReport>) -> ScenarioReport {
        ScenarioReport {
            scenario,
            seed: self.config.seed,
            n_folds: self.plan.n_folds,
            n_undefined_cells: self.matrix.n_undefined(),
            significance: significance(&variants, self.config.alpha),
            variants,
            differences: IndexMap::new(),
            grid: None,
            simulation: None,
        }
    }
}

/// Plain cross-validation at the configured threshold.
pub fn run_cv(
    corpus: &Corpus,
    config: &ScenarioConfig,
    learner: &dyn Learner,
) -> Result<ScenarioReport, ScenarioError> {
    let run = CvRun::new(corpus, config)?;
    let truth = run.labels(config.threshold)?;
    let pass = run.pass(&truth, &truth, learner, |i| run.plan.train(i))?;
    Ok(run.report(
        ScenarioKind::PlainCv,
        vec![VariantReport::new("cv", pass.reports)],
    ))
}

fn mean_difference(
    base: &VariantReport,
    other: &VariantReport,
) -> IndexMap<String, IndexMap<String, f64>> {
    let diff = |a: &IndexMap<String, f64>, b: &IndexMap<String, f64>| {
        a.iter()
            .filter_map(|(k, va)| b.get(k).map(|vb| (k.clone(), vb - va)))
            .collect::<IndexMap<String, f64>>()
    };
    let mut out = IndexMap::new();
    out.insert(
        "macro_f1".to_string(),
        diff(&base.mean.macro_f1_per_task, &other.mean.macro_f1_per_task),
    );
    out.insert(
        "lal".to_string(),
        diff(&base.mean.lal_per_task, &other.mean.lal_per_task),
    );
    out
}

/// Stage 1 cross-validates on the original labels and collects, for every
/// text, the prediction from the iteration that tested it. Stage 2 repeats
/// the cross-validation trained on those predicted labels and evaluated
/// against the originals. The original-trained variant is the stage-2
/// learner trained on the original labels. Differences are predicted-trained
/// minus original-trained fold means.
pub fn self_supervised(
    corpus: &Corpus,
    config: &ScenarioConfig,
    stage1: &dyn Learner,
    stage2: &dyn Learner,
) -> Result<ScenarioReport, ScenarioError> {
    let run = CvRun::new(corpus, config)?;
    let truth = run.labels(config.threshold)?;
    let first = run.pass(&truth, &truth, stage1, |i| run.plan.train(i))?;

    let mut predicted_bit: Vec<Option<bool>> = vec![None; truth.bits().len()];
    let n_tasks = truth.n_tasks();
    for (i, pred) in first.predictions.iter().enumerate() {
        for (row, &d) in run.plan.test(i).iter().enumerate() {
            for l in 0..n_tasks {
                predicted_bit[d * n_tasks + l] = Some(pred.bit(row, l));
            }
        }
    }
    let predicted = truth.relabel(|d, l| {
        predicted_bit[d * n_tasks + l].expect("every eligible text is tested once")
    });
    let baseline = run.pass(&truth, &truth, stage2, |i| run.plan.train(i))?;
    let second = run.pass(&truth, &predicted, stage2, |i| run.plan.train(i))?;

    let original = VariantReport::new("original", baseline.reports);
    let retrained = VariantReport::new("predicted", second.reports);
    let differences = mean_difference(&original, &retrained);
    let mut report = run.report(ScenarioKind::SelfSupervised, vec![original, retrained]);
    report.differences = differences;
    Ok(report)
}

/// Cross-validation with training sets grown one fold at a time.
pub fn incremental(
    corpus: &Corpus,
    config: &ScenarioConfig,
    learner: &dyn Learner,
) -> Result<ScenarioReport, ScenarioError> {
    let run = CvRun::new(corpus, config)?;
    let truth = run.labels(config.threshold)?;
    let variants = config
        .train_fold_counts
        .par_iter()
        .map(|&k| {
            let pass = run.pass(&truth, &truth, learner, |i| run.plan.train_prefix(i, k))?;
            Ok(VariantReport::new(format!("train_folds={k}"), pass.reports))
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    Ok(run.report(ScenarioKind::Incremental, variants))
}

/// Cross-validation repeated with targets recomputed at each threshold.
pub fn threshold_sweep(
    corpus: &Corpus,
    config: &ScenarioConfig,
    learner: &dyn Learner,
) -> Result<ScenarioReport, ScenarioError> {
    let run = CvRun::new(corpus, config)?;
    let variants = config
        .thresholds
        .par_iter()
        .map(|&t| {
            let truth = run.labels(t)?;
            let pass = run.pass(&truth, &truth, learner, |i| run.plan.train(i))?;
            Ok(VariantReport::new(format!("t={t}"), pass.reports))
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    Ok(run.report(ScenarioKind::ThresholdSweep, variants))
}

/// The built-in model in both modes over the same folds and seeds.
/// Differences are multi-task minus single-task fold means.
pub fn single_vs_multi(
    corpus: &Corpus,
    config: &ScenarioConfig,
) -> Result<ScenarioReport, ScenarioError> {
    if corpus.n_tasks() < 2 {
        return Err(ScenarioError::TooFewTasks(corpus.n_tasks()));
    }
    let run = CvRun::new(corpus, config)?;
    let truth = run.labels(config.threshold)?;
    let variants = [Mode::SingleTask, Mode::MultiTask]
        .par_iter()
        .map(|&mode| {
            let learner = LinearLearner {
                mode,
                config: config.train.clone(),
            };
            let pass = run.pass(&truth, &truth, &learner, |i| run.plan.train(i))?;
            Ok(VariantReport::new(mode.to_string(), pass.reports))
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let differences = mean_difference(&variants[0], &variants[1]);
    let mut report = run.report(ScenarioKind::SingleVsMulti, variants);
    report.differences = differences;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec};
    use crate::scenarios::learner::{ConstantLearner, OracleLearner};
    use crate::vtl::labels_for;

    fn small() -> Corpus {
        generate_synthetic(
            &SyntheticSpec {
                n_texts: 40,
                n_tasks: 3,
                n_annotators: 6,
                annotators_per_text: 4,
                ..Default::default()
            },
            1,
        )
        .unwrap()
    }

    fn quick() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.train.epochs = 5;
        c
    }

    #[test]
    fn oracle_cv_has_no_loss() {
        let c = small();
        let config = quick();
        let truth = labels_for(&c, Threshold::new(config.threshold).unwrap());
        let r = run_cv(
            &c,
            &config,
            &OracleLearner {
                truth: truth.clone(),
            },
        )
        .unwrap();
        let folds = &r.variants[0].folds;
        assert_eq!(folds.len(), 10);
        for f in folds {
            assert_eq!(f.aal, 0.0);
            assert_eq!(f.aer, f.n_invaluable as f64 / f.n_cells as f64);
        }
        let total: u64 = folds.iter().map(|f| f.n_cells).sum();
        assert_eq!(total as usize, truth.n_defined());
    }

    #[test]
    fn too_few_texts() {
        let c = generate_synthetic(
            &SyntheticSpec {
                n_texts: 9,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            run_cv(&c, &quick(), &ConstantLearner(true)),
            Err(ScenarioError::TooFewTexts { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn incremental_size_eight_is_plain_cv() {
        let c = small();
        let mut config = quick();
        config.train_fold_counts = vec![1, 8];
        let learner = LinearLearner {
            mode: Mode::MultiTask,
            config: config.train.clone(),
        };
        let inc = incremental(&c, &config, &learner).unwrap();
        let cv = run_cv(&c, &config, &learner).unwrap();
        assert_eq!(inc.variants[1].folds, cv.variants[0].folds);
        assert_eq!(inc.variants.len(), 2);
    }

    #[test]
    fn sweep_cardinality_and_zero_threshold() {
        let c = small();
        let mut config = quick();
        let r = threshold_sweep(&c, &config, &ConstantLearner(false)).unwrap();
        assert_eq!(r.variants.len(), 4);
        config.thresholds = vec![0.0];
        let r = threshold_sweep(&c, &config, &ConstantLearner(false)).unwrap();
        assert!(r.variants[0].folds.iter().all(|f| f.aer == 0.0));
    }

    #[test]
    fn oracle_stage_one_reproduces_plain_cv() {
        let c = small();
        let config = quick();
        let truth = labels_for(&c, Threshold::new(config.threshold).unwrap());
        let learner = LinearLearner {
            mode: Mode::MultiTask,
            config: config.train.clone(),
        };
        let ss = self_supervised(&c, &config, &OracleLearner { truth }, &learner).unwrap();
        let cv = run_cv(&c, &config, &learner).unwrap();
        assert_eq!(ss.variants[1].folds, cv.variants[0].folds);
    }

    #[test]
    fn single_task_corpus_is_rejected() {
        let c = generate_synthetic(
            &SyntheticSpec {
                n_tasks: 1,
                n_texts: 20,
                tasks_per_text: (0, 1),
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            single_vs_multi(&c, &quick()),
            Err(ScenarioError::TooFewTasks(1))
        ));
    }
}
