//! Texts-versus-annotations undersampling grid.

use super::folds::FoldPlan;
use super::{ScenarioConfig, ScenarioError, ScenarioKind, ScenarioReport};
use crate::corpus::Corpus;
use crate::metrics::r2;
use crate::predictor::{featurize, train_value_model, FeatureVector};
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples a training set of `n` annotations from the `m` most annotated
/// texts of `pool`.
///
/// An annotation here is one annotator's labelling of one text, with all of
/// its task values. Texts are ordered by annotation count, descending, ties
/// broken by ascending text id; the top `m` are visited in that order, one
/// annotation per text per pass, taking each text's annotations in ingestion
/// order, until `n` are collected. Returns the record indices of the sample,
/// or `None` when `m` exceeds the pool or `n` is not below the number of
/// annotations available in the top `m` texts.
pub fn round_robin_sample(
    corpus: &Corpus,
    pool: &[usize],
    m: usize,
    n: usize,
) -> Option<Vec<usize>> {
    if m > pool.len() {
        return None;
    }
    // per text: annotator units in order of first appearance
    let mut units: IndexMap<(usize, usize), Vec<usize>> = IndexMap::new();
    for (i, a) in corpus.annotations().iter().enumerate() {
        units.entry((a.text, a.annotator)).or_default().push(i);
    }
    let mut per_text: Vec<Vec<&Vec<usize>>> = vec![Vec::new(); corpus.n_texts()];
    for ((text, _), records) in &units {
        per_text[*text].push(records);
    }
    let mut order: Vec<usize> = pool.to_vec();
    order.sort_by(|&a, &b| {
        per_text[b]
            .len()
            .cmp(&per_text[a].len())
            .then_with(|| corpus.texts()[a].text_id.cmp(&corpus.texts()[b].text_id))
    });
    order.truncate(m);
    let available: usize = order.iter().map(|&d| per_text[d].len()).sum();
    if n >= available {
        return None;
    }
    let mut sample = Vec::new();
    let mut taken = 0;
    let mut pass = 0;
    while taken < n {
        for &d in &order {
            if taken == n {
                break;
            }
            if let Some(unit) = per_text[d].get(pass) {
                sample.extend_from_slice(unit);
                taken += 1;
            }
        }
        pass += 1;
    }
    sample.sort_unstable();
    Some(sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub texts: usize,
    pub annotations: usize,
    /// False when the budget cannot be met in some fold.
    pub feasible: bool,
    /// Per fold, the R² averaged over tasks with non-constant test values.
    pub r2_per_fold: Vec<Option<f64>>,
    pub r2_mean: Option<f64>,
    pub r2_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub texts: Vec<usize>,
    pub annotations: Vec<usize>,
    /// Row-major: one row per annotation budget, one column per text count.
    pub cells: Vec<GridCell>,
}

impl GridReport {
    pub fn cell(&self, annotations: usize, texts: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.texts == texts && c.annotations == annotations)
    }
}

/// Mean R² over tasks with defined R² on the test texts.
fn fold_r2(
    train: &Corpus,
    full: &Corpus,
    test: &[usize],
    features: &[FeatureVector],
    config: &ScenarioConfig,
) -> Option<f64> {
    let model = train_value_model(train, &config.grid.value);
    let mut truth: Vec<Vec<f64>> = vec![Vec::new(); full.n_tasks()];
    let mut pred: Vec<Vec<f64>> = vec![Vec::new(); full.n_tasks()];
    let mut is_test = vec![false; full.n_texts()];
    for &d in test {
        is_test[d] = true;
    }
    for a in full.annotations().iter().filter(|a| is_test[a.text]) {
        let task = &full.tasks()[a.task].task_id;
        let p = model
            .predict_features(&features[a.text], &full.annotators()[a.annotator], task)
            .expect("model covers every corpus task");
        truth[a.task].push(a.value as f64);
        pred[a.task].push(p);
    }
    let scores: Vec<f64> = truth
        .iter()
        .zip(&pred)
        .filter_map(|(t, p)| r2(t, p).ok())
        .collect();
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

/// R² of the personalized value model for every (texts, annotations) pair of
/// the configured grid, over `grid.n_folds` test folds. The fold after the
/// test fold is held out as validation, as in the other scenarios; the
/// training pool is the remaining folds.
pub fn diversity_grid(
    corpus: &Corpus,
    config: &ScenarioConfig,
) -> Result<ScenarioReport, ScenarioError> {
    config.validate()?;
    let counts = corpus.annotation_counts();
    let eligible: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    let got = eligible.iter().filter(|e| **e).count();
    let n_folds = config.grid.n_folds;
    let plan = FoldPlan::new(&eligible, n_folds, config.split_seed()).ok_or(
        ScenarioError::TooFewTexts {
            needed: n_folds,
            got,
        },
    )?;
    let features: Vec<FeatureVector> = corpus
        .texts()
        .iter()
        .map(|t| featurize(&t.content))
        .collect();

    let coords: Vec<(usize, usize)> = config
        .grid
        .annotations
        .iter()
        .flat_map(|&n| config.grid.texts.iter().map(move |&m| (n, m)))
        .collect();
    let samples: Vec<Option<Vec<Vec<usize>>>> = coords
        .iter()
        .map(|&(n, m)| {
            (0..n_folds)
                .map(|i| round_robin_sample(corpus, &plan.train(i), m, n))
                .collect()
        })
        .collect();

    let jobs: Vec<(usize, usize)> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some())
        .flat_map(|(c, _)| (0..n_folds).map(move |i| (c, i)))
        .collect();
    let results: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let sample = &samples[c].as_ref().expect("feasible")[i];
            let train = corpus.with_annotations(sample);
            fold_r2(&train, corpus, &plan.test(i), &features, config)
        })
        .collect();

    let mut per_cell: Vec<Vec<Option<f64>>> = vec![Vec::new(); coords.len()];
    for ((c, _), r) in jobs.iter().zip(results) {
        per_cell[*c].push(r);
    }
    let cells = coords
        .iter()
        .zip(per_cell)
        .zip(&samples)
        .map(|((&(n, m), r2_per_fold), sample)| {
            let defined: Vec<f64> = r2_per_fold.iter().flatten().copied().collect();
            let (r2_mean, r2_std) = if defined.is_empty() {
                (None, None)
            } else {
                let k = defined.len() as f64;
                let mean = defined.iter().sum::<f64>() / k;
                let std = if defined.len() < 2 {
                    0.0
                } else {
                    (defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
                };
                (Some(mean), Some(std))
            };
            GridCell {
                texts: m,
                annotations: n,
                feasible: sample.is_some(),
                r2_per_fold,
                r2_mean,
                r2_std,
            }
        })
        .collect();

    Ok(ScenarioReport {
        scenario: ScenarioKind::DiversityGrid,
        seed: config.seed,
        n_folds,
        n_undefined_cells: crate::vtl::compute_fractions(corpus).n_undefined(),
        variants: Vec::new(),
        differences: IndexMap::new(),
        grid: Some(GridReport {
            texts: config.grid.texts.clone(),
            annotations: config.grid.annotations.clone(),
            cells,
        }),
        simulation: None,
        significance: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationRecord, MlKind, TaskSchema, TextDoc};

    fn fixture() -> Corpus {
        // t1: 4 annotators, t2: 3, t3: 3, t4: 1, t5: 2
        let plan: [(&str, &[&str]); 5] = [
            ("t3", &["u1", "u2", "u3"]),
            ("t1", &["u4", "u1", "u2", "u3"]),
            ("t2", &["u3", "u1", "u5"]),
            ("t4", &["u2"]),
            ("t5", &["u5", "u4"]),
        ];
        let texts = plan
            .iter()
            .map(|(t, _)| TextDoc::new(*t, format!("text {t}")))
            .collect();
        let mut records = Vec::new();
        for (t, users) in plan {
            for u in users {
                records.push(AnnotationRecord::new(t, *u, "a", 1));
                records.push(AnnotationRecord::new(t, *u, "b", 0));
            }
        }
        Corpus::new(
            texts,
            vec![
                TaskSchema::new("a", 0, 1, MlKind::Binary),
                TaskSchema::new("b", 0, 4, MlKind::Ordinal),
            ],
            records,
        )
        .unwrap()
    }

    fn units(c: &Corpus, sample: &[usize]) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = sample
            .iter()
            .map(|&i| {
                let r = c.record(&c.annotations()[i]);
                (r.text_id.0, r.annotator_id.0)
            })
            .collect();
        out.dedup();
        out
    }

    #[test]
    fn single_text_takes_first_annotations() {
        let c = fixture();
        let pool: Vec<usize> = (0..5).collect();
        let s = round_robin_sample(&c, &pool, 1, 3).unwrap();
        let got = units(&c, &s);
        let want: Vec<(String, String)> = ["u4", "u1", "u2"]
            .iter()
            .map(|u| ("t1".to_string(), u.to_string()))
            .collect();
        assert_eq!(got, want);
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn round_robin_with_tie_break() {
        let c = fixture();
        let pool: Vec<usize> = (0..5).collect();
        // order: t1 (4), t2 (3), t3 (3), t5 (2), t4 (1)
        let s = round_robin_sample(&c, &pool, 3, 5).unwrap();
        let mut got = units(&c, &s);
        got.sort();
        let mut want: Vec<(String, String)> = [
            ("t1", "u4"),
            ("t2", "u3"),
            ("t3", "u1"),
            ("t1", "u1"),
            ("t2", "u1"),
        ]
        .iter()
        .map(|(t, u)| (t.to_string(), u.to_string()))
        .collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn over_budget_is_infeasible() {
        let c = fixture();
        let pool: Vec<usize> = (0..5).collect();
        assert!(round_robin_sample(&c, &pool, 1, 4).is_none());
        assert!(round_robin_sample(&c, &pool, 6, 1).is_none());
        assert!(round_robin_sample(&c, &pool, 5, 12).is_some());
        assert!(round_robin_sample(&c, &pool, 5, 13).is_none());
    }
}
