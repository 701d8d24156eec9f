//! Model-routed acquisition: which candidate cells go to human annotators.

use super::folds::FoldPlan;
use super::learner::{FitJob, Learner};
use super::{ScenarioConfig, ScenarioError};
use crate::corpus::{profile, Corpus, TaskId, TextId};
use crate::metrics::{evaluate, MetricReport};
use crate::predictor::{featurize_corpus, PredictionSet};
use crate::vtl::{labels_for, Threshold};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Route {
    /// Send the cell to every annotator of the text.
    Human,
    /// Label the cell 0 for every annotator without asking anyone.
    AutoZero,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::Human => "HUMAN",
            Route::AutoZero => "AUTO_ZERO",
        }
    }
}

/// Routing decision per (text, task), row-major in text then task order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionPlan {
    pub text_ids: Vec<TextId>,
    pub task_ids: Vec<TaskId>,
    pub routes: Vec<Route>,
    pub scores: Vec<f64>,
    /// Number of human-routed tasks per text.
    pub human_per_text: Vec<usize>,
    pub n_human_cells: usize,
    pub n_auto_cells: usize,
}

impl AcquisitionPlan {
    /// Routes a cell to humans exactly when its predicted bit is 1.
    pub fn from_predictions(pred: &PredictionSet) -> Self {
        let k = pred.task_ids().len();
        let mut routes = Vec::with_capacity(pred.text_ids().len() * k);
        let mut scores = Vec::with_capacity(routes.capacity());
        let mut human_per_text = Vec::with_capacity(pred.text_ids().len());
        for d in 0..pred.text_ids().len() {
            let mut humans = 0;
            for l in 0..k {
                let human = pred.bit(d, l);
                humans += human as usize;
                routes.push(if human { Route::Human } else { Route::AutoZero });
                scores.push(pred.score(d, l));
            }
            human_per_text.push(humans);
        }
        let n_human_cells = human_per_text.iter().sum();
        Self {
            text_ids: pred.text_ids().to_vec(),
            task_ids: pred.task_ids().to_vec(),
            n_auto_cells: routes.len() - n_human_cells,
            routes,
            scores,
            human_per_text,
            n_human_cells,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.routes.len()
    }

    pub fn route(&self, text: usize, task: usize) -> Route {
        self.routes[text * self.task_ids.len() + task]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub price_per_label: f64,
    pub annotators_per_text: f64,
    pub n_cells: usize,
    pub n_human_cells: usize,
    /// Every cell labelled by every annotator of its text.
    pub full_cost: f64,
    /// Human-routed cells only.
    pub plan_cost: f64,
    pub savings: f64,
    pub savings_fraction: f64,
}

/// Prices a plan against labelling every cell by hand.
pub fn estimate_cost(
    plan: &AcquisitionPlan,
    price_per_label: f64,
    annotators_per_text: f64,
) -> Result<CostReport, ScenarioError> {
    if !(price_per_label > 0.0 && price_per_label.is_finite()) {
        return Err(ScenarioError::InvalidPrice(price_per_label));
    }
    if !(annotators_per_text >= 0.0 && annotators_per_text.is_finite()) {
        return Err(ScenarioError::InvalidConfig(format!(
            "annotators per text must be non-negative, got {annotators_per_text}"
        )));
    }
    let full_cost = plan.n_cells() as f64 * annotators_per_text * price_per_label;
    let plan_cost = plan.n_human_cells as f64 * annotators_per_text * price_per_label;
    let savings = full_cost - plan_cost;
    Ok(CostReport {
        price_per_label,
        annotators_per_text,
        n_cells: plan.n_cells(),
        n_human_cells: plan.n_human_cells,
        full_cost,
        plan_cost,
        savings,
        savings_fraction: if full_cost > 0.0 {
            savings / full_cost
        } else {
            0.0
        },
    })
}

/// Plan, its evaluation against the candidates' held truth, and its cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub plan: AcquisitionPlan,
    pub report: MetricReport,
    pub cost: CostReport,
}

/// Trains on the seed corpus, routes every candidate cell, and scores the
/// routing against the candidates' ground-truth labels at the configured
/// threshold. One fold of the seed texts is held out for validation when
/// the seed corpus has at least `n_folds` annotated texts.
pub fn simulate_acquisition(
    seed_corpus: &Corpus,
    candidates: &Corpus,
    config: &ScenarioConfig,
    learner: &dyn Learner,
) -> Result<SimulationOutcome, ScenarioError> {
    config.validate()?;
    if seed_corpus.tasks() != candidates.tasks() {
        return Err(ScenarioError::SchemaMismatch);
    }
    let merged = seed_corpus.concat(candidates)?;
    let threshold = Threshold::new(config.threshold)
        .map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
    let truth = labels_for(&merged, threshold);
    let features = featurize_corpus(&merged);

    let n_seed = seed_corpus.n_texts();
    let eligible: Vec<bool> = (0..merged.n_texts())
        .map(|d| d < n_seed && truth.row(d).iter().any(|b| b.is_some()))
        .collect();
    let (train, validation): (Vec<usize>, Vec<usize>) =
        match FoldPlan::new(&eligible, config.n_folds, config.split_seed()) {
            Some(plan) => {
                let val = plan.members(0);
                let train = (0..merged.n_texts())
                    .filter(|&d| eligible[d] && !val.contains(&d))
                    .collect();
                (train, val)
            }
            None => ((0..n_seed).filter(|&d| eligible[d]).collect(), Vec::new()),
        };
    let test: Vec<usize> = (n_seed..merged.n_texts()).collect();
    let job = FitJob {
        corpus: &merged,
        features: &features,
        labels: &truth,
        train: &train,
        validation: &validation,
        test: &test,
        seed: config.train_seed(0),
    };
    let pred = learner.fit_predict(&job)?;
    let report = evaluate(&truth.select_texts(&test), &pred)?;
    let plan = AcquisitionPlan::from_predictions(&pred);
    let annotators_per_text = match config.simulate.annotators_per_text {
        Some(a) => a,
        None if candidates.n_texts() > 0 => profile(candidates)
            .map(|p| p.avg_annotations_per_text)
            .unwrap_or(0.0),
        None => 0.0,
    };
    let cost = estimate_cost(&plan, config.simulate.price_per_label, annotators_per_text)?;
    Ok(SimulationOutcome { plan, report, cost })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(bits: &[bool], tasks: usize) -> AcquisitionPlan {
        let texts = (0..bits.len() / tasks)
            .map(|i| TextId::from(format!("d{i}")))
            .collect();
        let task_ids = (0..tasks).map(|i| TaskId::from(format!("l{i}"))).collect();
        AcquisitionPlan::from_predictions(&PredictionSet::from_bits(texts, task_ids, bits.to_vec()))
    }

    #[test]
    fn routes_follow_bits() {
        let p = plan(&[false, true], 2);
        assert_eq!(p.route(0, 0), Route::AutoZero);
        assert_eq!(p.route(0, 1), Route::Human);
        assert_eq!(p.human_per_text, vec![1]);
        assert_eq!(p.n_human_cells + p.n_auto_cells, 2);
    }

    #[test]
    fn all_human_costs_full_price() {
        let p = plan(&[true; 100], 1);
        let c = estimate_cost(&p, 0.012, 10.0).unwrap();
        assert!((c.full_cost - 12.0).abs() < 1e-9);
        assert_eq!(c.plan_cost, c.full_cost);
        assert_eq!(c.savings, 0.0);
    }

    #[test]
    fn savings_proportional_to_auto_cells() {
        let bits: Vec<bool> = (0..10).map(|i| i >= 4).collect();
        let c = estimate_cost(&plan(&bits, 1), 0.5, 3.0).unwrap();
        assert!((c.savings_fraction - 0.4).abs() < 1e-12);
    }

    #[test]
    fn price_must_be_positive() {
        let p = plan(&[true], 1);
        for price in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                estimate_cost(&p, price, 1.0),
                Err(ScenarioError::InvalidPrice(_))
            ));
        }
    }
}
