//! Evaluation of acquisition decisions.
//!
//! Each defined cell falls in one of four bins, by truth bit and prediction:
//!
//! | truth | pred | meaning                                  |
//! |-------|------|------------------------------------------|
//! | 0     | 0    | saved: correctly auto-labelled as zero   |
//! | 0     | 1    | wasted: sent to humans needlessly        |
//! | 1     | 0    | lost: valuable cell skipped              |
//! | 1     | 1    | kept: valuable cell sent to humans       |
//!
//! AER is saved / all cells, AAL is lost / valuable cells, LAL is the same
//! ratio within one task, MLRAL averages LAL over tasks that have valuable
//! cells, and MB = AER − AAL. Ratios are available exactly as rationals.

use crate::predictor::PredictionSet;
use crate::vtl::VtlLabels;
use indexmap::IndexMap;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("true values have zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Confusion counts for one task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub saved: u64,
    pub wasted: u64,
    pub lost: u64,
    pub kept: u64,
}

impl CellCounts {
    pub fn total(&self) -> u64 {
        self.saved + self.wasted + self.lost + self.kept
    }

    pub fn valuable(&self) -> u64 {
        self.lost + self.kept
    }

    pub fn invaluable(&self) -> u64 {
        self.saved + self.wasted
    }

    fn add(&mut self, other: &CellCounts) {
        self.saved += other.saved;
        self.wasted += other.wasted;
        self.lost += other.lost;
        self.kept += other.kept;
    }
}

/// Per-task confusion counts over the defined cells of a grid, in truth task order.
#[derive(Debug, Clone, PartialEq)]
pub struct Confusion {
    pub task_ids: Vec<String>,
    pub per_task: Vec<CellCounts>,
}

/// Aligns predictions to the truth grid and tallies every defined cell.
pub fn confusion(truth: &VtlLabels, pred: &PredictionSet) -> Result<Confusion, MetricsError> {
    if truth.n_tasks() != pred.task_ids().len() {
        return Err(MetricsError::GridMismatch(format!(
            "{} truth tasks vs {} predicted tasks",
            truth.n_tasks(),
            pred.task_ids().len()
        )));
    }
    if truth.n_texts() != pred.text_ids().len() {
        return Err(MetricsError::GridMismatch(format!(
            "{} truth texts vs {} predicted texts",
            truth.n_texts(),
            pred.text_ids().len()
        )));
    }
    let task_map: Vec<usize> = truth
        .task_ids
        .iter()
        .map(|t| {
            pred.task_idx(t)
                .ok_or_else(|| MetricsError::GridMismatch(format!("task {t} not predicted")))
        })
        .collect::<Result<_, _>>()?;
    let mut per_task = vec![CellCounts::default(); truth.n_tasks()];
    for (d, text) in truth.text_ids.iter().enumerate() {
        let row = pred
            .text_idx(text)
            .ok_or_else(|| MetricsError::GridMismatch(format!("text {text} not predicted")))?;
        for (l, counts) in per_task.iter_mut().enumerate() {
            let Some(t) = truth.get(d, l) else { continue };
            let p = pred.bit(row, task_map[l]);
            match (t, p) {
                (false, false) => counts.saved += 1,
                (false, true) => counts.wasted += 1,
                (true, false) => counts.lost += 1,
                (true, true) => counts.kept += 1,
            }
        }
    }
    Ok(Confusion {
        task_ids: truth.task_ids.iter().map(|t| t.0.clone()).collect(),
        per_task,
    })
}

fn ratio(num: u64, den: u64) -> Ratio<i64> {
    if den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(num as i64, den as i64)
    }
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl Confusion {
    pub fn totals(&self) -> CellCounts {
        let mut c = CellCounts::default();
        for t in &self.per_task {
            c.add(t);
        }
        c
    }

    /// Saved cells over all defined cells; 0 on an empty grid.
    pub fn aer_ratio(&self) -> Ratio<i64> {
        let c = self.totals();
        ratio(c.saved, c.total())
    }

    /// Lost cells over valuable cells; 0 when nothing is valuable.
    pub fn aal_ratio(&self) -> Ratio<i64> {
        let c = self.totals();
        ratio(c.lost, c.valuable())
    }

    /// `None` for a task without valuable cells.
    pub fn lal_ratio(&self, task: usize) -> Option<Ratio<i64>> {
        let c = &self.per_task[task];
        (c.valuable() > 0).then(|| ratio(c.lost, c.valuable()))
    }

    /// Mean LAL over tasks with at least one valuable cell; 0 if there are none.
    pub fn mlral_ratio(&self) -> Ratio<i64> {
        let included: Vec<Ratio<i64>> = (0..self.per_task.len())
            .filter_map(|l| self.lal_ratio(l))
            .collect();
        if included.is_empty() {
            return Ratio::from_integer(0);
        }
        let sum = included
            .iter()
            .fold(Ratio::from_integer(0), |acc, r| acc + r);
        sum / Ratio::from_integer(included.len() as i64)
    }

    pub fn mb_ratio(&self) -> Ratio<i64> {
        self.aer_ratio() - self.aal_ratio()
    }

    pub fn excluded_tasks(&self) -> Vec<String> {
        self.per_task
            .iter()
            .zip(&self.task_ids)
            .filter(|(c, _)| c.valuable() == 0)
            .map(|(_, t)| t.clone())
            .collect()
    }
}

pub fn aer(truth: &VtlLabels, pred: &PredictionSet) -> Result<f64, MetricsError> {
    Ok(to_f64(confusion(truth, pred)?.aer_ratio()))
}

pub fn aal(truth: &VtlLabels, pred: &PredictionSet) -> Result<f64, MetricsError> {
    Ok(to_f64(confusion(truth, pred)?.aal_ratio()))
}

/// LAL for one task (truth task index); 0 when the task has no valuable cells.
pub fn lal(truth: &VtlLabels, pred: &PredictionSet, task: usize) -> Result<f64, MetricsError> {
    let c = confusion(truth, pred)?;
    if task >= c.per_task.len() {
        return Err(MetricsError::GridMismatch(format!("no task {task}")));
    }
    Ok(c.lal_ratio(task).map(to_f64).unwrap_or(0.0))
}

pub fn mlral(truth: &VtlLabels, pred: &PredictionSet) -> Result<f64, MetricsError> {
    Ok(to_f64(confusion(truth, pred)?.mlral_ratio()))
}

pub fn mb(aer: f64, aal: f64) -> f64 {
    aer - aal
}

/// Unweighted mean of per-class F1 over the classes present in either vector.
pub fn macro_f1(truth: &[bool], pred: &[bool]) -> Result<f64, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut m = [[0u64; 2]; 2];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t as usize][p as usize] += 1;
    }
    let mut f1s = Vec::with_capacity(2);
    for class in 0..2 {
        let tp = m[class][class];
        let fp = m[1 - class][class];
        let fn_ = m[class][1 - class];
        if tp + fp + fn_ == 0 {
            continue;
        }
        f1s.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
    }
    Ok(f1s.iter().sum::<f64>() / f1s.len() as f64)
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Every acquisition metric for one truth/prediction pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub aer: f64,
    pub aal: f64,
    pub mlral: f64,
    pub mb: f64,
    pub lal_per_task: IndexMap<String, f64>,
    pub macro_f1_per_task: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub r2_per_task: IndexMap<String, f64>,
    pub n_cells: u64,
    pub n_valuable: u64,
    pub n_invaluable: u64,
    /// AAL had an empty denominator and was set to 0.
    pub aal_undefined: bool,
    /// Tasks without valuable cells, left out of MLRAL (their LAL is reported as 0).
    pub mlral_excluded_tasks: Vec<String>,
}

impl MetricReport {
    pub fn mean_macro_f1(&self) -> Option<f64> {
        if self.macro_f1_per_task.is_empty() {
            return None;
        }
        Some(self.macro_f1_per_task.values().sum::<f64>() / self.macro_f1_per_task.len() as f64)
    }
}

/// Scores predictions against truth on every defined cell.
pub fn evaluate(truth: &VtlLabels, pred: &PredictionSet) -> Result<MetricReport, MetricsError> {
    let c = confusion(truth, pred)?;
    let totals = c.totals();
    let aer = to_f64(c.aer_ratio());
    let aal = to_f64(c.aal_ratio());
    let mut lal_per_task = IndexMap::new();
    let mut macro_f1_per_task = IndexMap::new();
    for (l, task) in c.task_ids.iter().enumerate() {
        lal_per_task.insert(task.clone(), c.lal_ratio(l).map(to_f64).unwrap_or(0.0));
        let counts = &c.per_task[l];
        if counts.total() > 0 {
            macro_f1_per_task.insert(task.clone(), macro_f1_from_counts(counts));
        }
    }
    Ok(MetricReport {
        aer,
        aal,
        mlral: to_f64(c.mlral_ratio()),
        mb: mb(aer, aal),
        lal_per_task,
        macro_f1_per_task,
        r2_per_task: IndexMap::new(),
        n_cells: totals.total(),
        n_valuable: totals.valuable(),
        n_invaluable: totals.invaluable(),
        aal_undefined: totals.valuable() == 0,
        mlral_excluded_tasks: c.excluded_tasks(),
    })
}

fn macro_f1_from_counts(c: &CellCounts) -> f64 {
    let truth: Vec<bool> = std::iter::repeat_n(false, (c.saved + c.wasted) as usize)
        .chain(std::iter::repeat_n(true, (c.lost + c.kept) as usize))
        .collect();
    let pred: Vec<bool> = std::iter::repeat_n(false, c.saved as usize)
        .chain(std::iter::repeat_n(true, c.wasted as usize))
        .chain(std::iter::repeat_n(false, c.lost as usize))
        .chain(std::iter::repeat_n(true, c.kept as usize))
        .collect();
    macro_f1(&truth, &pred).expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TaskId, TextId};
    use crate::vtl::Threshold;

    fn grid(rows: &[&[u8]]) -> (Vec<TextId>, Vec<TaskId>) {
        let texts = (0..rows.len()).map(|i| TextId(format!("d{i}"))).collect();
        let tasks = (0..rows[0].len())
            .map(|i| TaskId(format!("l{i}")))
            .collect();
        (texts, tasks)
    }

    fn truth(rows: &[&[u8]]) -> VtlLabels {
        let (texts, tasks) = grid(rows);
        let bits = rows
            .iter()
            .flat_map(|r| r.iter().map(|b| Some(*b == 1)))
            .collect();
        VtlLabels::from_bits(Threshold::new(0.25).unwrap(), texts, tasks, bits)
    }

    fn pred(rows: &[&[u8]]) -> PredictionSet {
        let (texts, tasks) = grid(rows);
        let bits = rows
            .iter()
            .flat_map(|r| r.iter().map(|b| *b == 1))
            .collect();
        PredictionSet::from_bits(texts, tasks, bits)
    }

    #[test]
    fn aer_examples() {
        let t: &[&[u8]] = &[&[0, 0], &[0, 1]];
        assert_eq!(aer(&truth(t), &pred(t)).unwrap(), 0.75);
        let ones: &[&[u8]] = &[&[1, 1], &[1, 1]];
        let any: &[&[u8]] = &[&[0, 1], &[1, 0]];
        assert_eq!(aer(&truth(ones), &pred(any)).unwrap(), 0.0);
        let zeros: &[&[u8]] = &[&[0, 0], &[0, 0]];
        assert_eq!(aer(&truth(zeros), &pred(zeros)).unwrap(), 1.0);
    }

    #[test]
    fn aal_examples() {
        let t: &[&[u8]] = &[&[1, 0], &[0, 1]];
        assert_eq!(aal(&truth(t), &pred(t)).unwrap(), 0.0);
        let miss_one: &[&[u8]] = &[&[1, 0], &[0, 0]];
        assert_eq!(aal(&truth(t), &pred(miss_one)).unwrap(), 0.5);
        let zeros: &[&[u8]] = &[&[0, 0], &[0, 0]];
        let r = evaluate(&truth(zeros), &pred(t)).unwrap();
        assert_eq!(r.aal, 0.0);
        assert!(r.aal_undefined);
    }

    #[test]
    fn lal_and_mlral() {
        // task 0: 2 valuable, 1 missed -> 0.5; task 1: 1 valuable, kept -> 0
        let t: &[&[u8]] = &[&[1, 1], &[1, 0]];
        let p: &[&[u8]] = &[&[0, 1], &[1, 0]];
        assert_eq!(lal(&truth(t), &pred(p), 0).unwrap(), 0.5);
        assert_eq!(lal(&truth(t), &pred(p), 1).unwrap(), 0.0);
        assert_eq!(mlral(&truth(t), &pred(p)).unwrap(), 0.25);
        assert_eq!(mlral(&truth(t), &pred(t)).unwrap(), 0.0);
    }

    #[test]
    fn single_task_collapse() {
        let t: &[&[u8]] = &[&[1], &[1], &[0], &[1]];
        let p: &[&[u8]] = &[&[0], &[1], &[1], &[1]];
        let r = evaluate(&truth(t), &pred(p)).unwrap();
        assert_eq!(r.mlral, r.aal);
        assert_eq!(r.lal_per_task["l0"], r.aal);
    }

    #[test]
    fn mlral_excludes_valueless_tasks() {
        let t: &[&[u8]] = &[&[1, 0], &[1, 0]];
        let p: &[&[u8]] = &[&[0, 0], &[1, 1]];
        let r = evaluate(&truth(t), &pred(p)).unwrap();
        assert_eq!(r.mlral, 0.5);
        assert_eq!(r.mlral_excluded_tasks, vec!["l1".to_string()]);
    }

    #[test]
    fn mb_values() {
        assert!((mb(0.39, 0.14) - 0.25).abs() < 1e-12);
        assert!((mb(0.41, 0.27) - 0.14).abs() < 1e-12);
        assert_eq!(mb(0.3, 0.3), 0.0);
    }

    #[test]
    fn undefined_cells_leave_denominator() {
        let (texts, tasks) = grid(&[&[0, 0], &[0, 0]]);
        let t = VtlLabels::from_bits(
            Threshold::new(0.25).unwrap(),
            texts.clone(),
            tasks.clone(),
            vec![Some(false), None, Some(true), None],
        );
        let p = PredictionSet::from_bits(texts, tasks, vec![false, false, true, false]);
        let r = evaluate(&t, &p).unwrap();
        assert_eq!(r.n_cells, 2);
        assert_eq!(r.aer, 0.5);
    }

    #[test]
    fn grid_mismatch() {
        let t: &[&[u8]] = &[&[0, 0], &[0, 1]];
        let p: &[&[u8]] = &[&[0, 0]];
        assert!(matches!(
            aer(&truth(t), &pred(p)),
            Err(MetricsError::GridMismatch(_))
        ));
        let p3: &[&[u8]] = &[&[0, 0, 0], &[0, 0, 0]];
        assert!(matches!(
            aal(&truth(t), &pred(p3)),
            Err(MetricsError::GridMismatch(_))
        ));
    }

    // brute-force confusion matrix oracle
    fn f1_oracle(truth: &[bool], pred: &[bool], class: bool) -> f64 {
        let tp = truth
            .iter()
            .zip(pred)
            .filter(|(t, p)| **t == class && **p == class)
            .count() as f64;
        let pp = pred.iter().filter(|p| **p == class).count() as f64;
        let ap = truth.iter().filter(|t| **t == class).count() as f64;
        let (precision, recall) = (tp / pp, tp / ap);
        2.0 * precision * recall / (precision + recall)
    }

    #[test]
    fn macro_f1_examples() {
        let t = [false, false, true, true];
        let p = [false, true, true, true];
        let expected = (f1_oracle(&t, &p, false) + f1_oracle(&t, &p, true)) / 2.0;
        let got = macro_f1(&t, &p).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.733).abs() < 1e-3);
        assert_eq!(macro_f1(&t, &t).unwrap(), 1.0);
        assert_eq!(macro_f1(&[], &[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn r2_examples() {
        let y = [1.0, 2.0, 3.0, 6.0];
        let mean = [3.0; 4];
        assert_eq!(r2(&y, &mean).unwrap(), 0.0);
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(
            r2(&[2.0, 2.0], &[1.0, 2.0]),
            Err(MetricsError::ZeroVariance)
        );
        assert_eq!(r2(&[], &[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn evaluate_macro_f1_matches_direct() {
        let t: &[&[u8]] = &[&[0], &[0], &[1], &[1]];
        let p: &[&[u8]] = &[&[0], &[1], &[1], &[1]];
        let r = evaluate(&truth(t), &pred(p)).unwrap();
        let direct = macro_f1(&[false, false, true, true], &[false, true, true, true]).unwrap();
        assert_eq!(r.macro_f1_per_task["l0"], direct);
    }
}
