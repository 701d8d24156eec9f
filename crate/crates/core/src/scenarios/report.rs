//! Per-fold reports, their aggregates, and significance matrices.

use super::acquisition::SimulationOutcome;
use super::diversity::GridReport;
use super::ScenarioKind;
use crate::metrics::MetricReport;
use crate::stats::{compare, TestResult};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Scalar and per-task metrics, used for fold means and standard deviations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub aer: f64,
    pub aal: f64,
    pub mlral: f64,
    pub mb: f64,
    pub lal_per_task: IndexMap<String, f64>,
    pub macro_f1_per_task: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub r2_per_task: IndexMap<String, f64>,
}

/// Results of one variant (a threshold, a train size, a mode, ...) over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub folds: Vec<MetricReport>,
    pub mean: MetricSummary,
    /// Sample standard deviation over folds (0 for a single fold).
    pub std: MetricSummary,
}

impl VariantReport {
    pub fn new(name: impl Into<String>, folds: Vec<MetricReport>) -> Self {
        let (mean, std) = summarize(&folds);
        Self {
            name: name.into(),
            folds,
            mean,
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    /// Absent when either sample has fewer than three values.
    pub result: Option<TestResult>,
}

/// Pairwise tests of one metric between labelled per-fold samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub metric: String,
    /// What the labels are: `variants`, `tasks in <variant>`, ...
    pub scope: String,
    pub n_comparisons: usize,
    pub pairs: Vec<PairTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub n_folds: usize,
    /// Cells without annotations, excluded from every metric.
    pub n_undefined_cells: usize,
    pub variants: Vec<VariantReport>,
    /// Per metric, per task: mean of the second variant minus the first.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub differences: IndexMap<String, IndexMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationOutcome>,
    pub significance: Vec<SignificanceMatrix>,
}

impl ScenarioReport {
    /// Wraps a simulation outcome so it can be written like any scenario.
    pub fn from_simulation(
        outcome: SimulationOutcome,
        seed: u64,
        n_undefined_cells: usize,
    ) -> Self {
        Self {
            scenario: ScenarioKind::Simulate,
            seed,
            n_folds: 0,
            n_undefined_cells,
            variants: Vec::new(),
            differences: IndexMap::new(),
            grid: None,
            simulation: Some(outcome),
            significance: Vec::new(),
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize_map<'a>(
    folds: impl Iterator<Item = &'a IndexMap<String, f64>> + Clone,
) -> (IndexMap<String, f64>, IndexMap<String, f64>) {
    let mut keys: Vec<&String> = Vec::new();
    for m in folds.clone() {
        for k in m.keys() {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let mut mean = IndexMap::new();
    let mut std = IndexMap::new();
    for k in keys {
        let values: Vec<f64> = folds.clone().filter_map(|m| m.get(k).copied()).collect();
        let (m, s) = mean_std(&values);
        mean.insert(k.clone(), m);
        std.insert(k.clone(), s);
    }
    (mean, std)
}

/// Fold mean and sample standard deviation of every metric. Per-task values
/// average over the folds where the task has a value. The mean MB is the
/// difference of the mean AER and mean AAL, so the identity also holds for
/// aggregates.
pub fn summarize(folds: &[MetricReport]) -> (MetricSummary, MetricSummary) {
    let scalar = |f: fn(&MetricReport) -> f64| {
        let v: Vec<f64> = folds.iter().map(f).collect();
        mean_std(&v)
    };
    let (aer, aer_s) = scalar(|r| r.aer);
    let (aal, aal_s) = scalar(|r| r.aal);
    let (mlral, mlral_s) = scalar(|r| r.mlral);
    let (_, mb_s) = scalar(|r| r.mb);
    let (lal, lal_s) = summarize_map(folds.iter().map(|r| &r.lal_per_task));
    let (f1, f1_s) = summarize_map(folds.iter().map(|r| &r.macro_f1_per_task));
    let (r2, r2_s) = summarize_map(folds.iter().map(|r| &r.r2_per_task));
    (
        MetricSummary {
            aer,
            aal,
            mlral,
            mb: aer - aal,
            lal_per_task: lal,
            macro_f1_per_task: f1,
            r2_per_task: r2,
        },
        MetricSummary {
            aer: aer_s,
            aal: aal_s,
            mlral: mlral_s,
            mb: mb_s,
            lal_per_task: lal_s,
            macro_f1_per_task: f1_s,
            r2_per_task: r2_s,
        },
    )
}

/// Per-fold samples of a named metric (`aer`, `aal`, `mlral`, `mb`, or a
/// per-task `lal` / `macro_f1` when `task` is given).
pub(crate) fn samples(folds: &[MetricReport], metric: &str, task: Option<&str>) -> Vec<f64> {
    folds
        .iter()
        .filter_map(|r| match (metric, task) {
            ("aer", None) => Some(r.aer),
            ("aal", None) => Some(r.aal),
            ("mlral", None) => Some(r.mlral),
            ("mb", None) => Some(r.mb),
            ("lal", Some(t)) => r.lal_per_task.get(t).copied(),
            ("macro_f1", Some(t)) => r.macro_f1_per_task.get(t).copied(),
            _ => None,
        })
        .collect()
}

/// All pairwise comparisons among labelled samples, Bonferroni-corrected
/// for the number of pairs.
pub(crate) fn pairwise(
    metric: &str,
    scope: String,
    labelled: &[(String, Vec<f64>)],
    alpha: f64,
) -> SignificanceMatrix {
    let n_pairs = labelled.len() * labelled.len().saturating_sub(1) / 2;
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..labelled.len() {
        for j in i + 1..labelled.len() {
            let result = compare(&labelled[i].1, &labelled[j].1, alpha, n_pairs.max(1)).ok();
            pairs.push(PairTest {
                a: labelled[i].0.clone(),
                b: labelled[j].0.clone(),
                result,
            });
        }
    }
    SignificanceMatrix {
        metric: metric.to_string(),
        scope,
        n_comparisons: n_pairs,
        pairs,
    }
}

/// Variant-versus-variant matrices for the scalar metrics, then
/// task-versus-task matrices of LAL and macro-F1 within each variant.
pub(crate) fn significance(variants: &[VariantReport], alpha: f64) -> Vec<SignificanceMatrix> {
    let mut out = Vec::new();
    if variants.len() >= 2 {
        for metric in ["aer", "aal", "mlral", "mb"] {
            let labelled: Vec<(String, Vec<f64>)> = variants
                .iter()
                .map(|v| (v.name.clone(), samples(&v.folds, metric, None)))
                .collect();
            out.push(pairwise(metric, "variants".into(), &labelled, alpha));
        }
    }
    for v in variants {
        for metric in ["lal", "macro_f1"] {
            let tasks: Vec<&String> = match metric {
                "lal" => v.mean.lal_per_task.keys().collect(),
                _ => v.mean.macro_f1_per_task.keys().collect(),
            };
            if tasks.len() < 2 {
                continue;
            }
            let labelled: Vec<(String, Vec<f64>)> = tasks
                .iter()
                .map(|t| ((*t).clone(), samples(&v.folds, metric, Some(t))))
                .collect();
            out.push(pairwise(
                metric,
                format!("tasks in {}", v.name),
                &labelled,
                alpha,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(aer: f64, aal: f64, f1: f64) -> MetricReport {
        MetricReport {
            aer,
            aal,
            mlral: aal,
            mb: aer - aal,
            lal_per_task: [("x".to_string(), aal)].into_iter().collect(),
            macro_f1_per_task: [("x".to_string(), f1)].into_iter().collect(),
            r2_per_task: IndexMap::new(),
            n_cells: 4,
            n_valuable: 2,
            n_invaluable: 2,
            aal_undefined: false,
            mlral_excluded_tasks: vec![],
        }
    }

    #[test]
    fn mean_and_sample_std() {
        let folds = vec![report(0.2, 0.1, 0.5), report(0.4, 0.3, 0.7)];
        let (m, s) = summarize(&folds);
        assert!((m.aer - 0.3).abs() < 1e-15);
        assert_eq!(m.mb, m.aer - m.aal);
        assert!((s.aer - 0.02f64.sqrt()).abs() < 1e-12);
        assert!((m.macro_f1_per_task["x"] - 0.6).abs() < 1e-12);
        let (_, s1) = summarize(&folds[..1]);
        assert_eq!(s1.aer, 0.0);
    }

    #[test]
    fn pairwise_counts_pairs() {
        let labelled = vec![
            ("a".to_string(), vec![0.1, 0.2, 0.3, 0.25]),
            ("b".to_string(), vec![0.5, 0.6, 0.55, 0.65]),
            ("c".to_string(), vec![0.1, 0.2]),
        ];
        let m = pairwise("mb", "variants".into(), &labelled, 0.05);
        assert_eq!(m.n_comparisons, 3);
        assert_eq!(m.pairs.len(), 3);
        let ab = m.pairs[0].result.as_ref().unwrap();
        assert!((ab.corrected_alpha - 0.05 / 3.0).abs() < 1e-15);
        assert!(m.pairs[1].result.is_none());
    }
}
