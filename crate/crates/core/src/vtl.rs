//! Valuable-text-label targets.
//!
//! For every `(text, task)` cell the non-zero share of its annotations is
//! kept as an exact pair of counts. A cell is valuable at threshold `t` when
//! `nonzero / total >= t`; the comparison is done by cross-multiplication so
//! that a share exactly equal to `t` is never lost to rounding. Cells with
//! no annotations are undefined and carry no bit.

use crate::corpus::{Corpus, TaskId, TextId};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VtlError {
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
}

const MAX_DECIMALS: u32 = 18;

/// A threshold in `[0, 1]` held as an exact rational.
///
/// Built from an `f64`, the rational is the shortest decimal that round-trips
/// to that float, so `0.1` means one tenth rather than the nearest binary
/// fraction. Inputs needing more than 18 decimals are rounded to 18.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Threshold {
    num: u64,
    den: u64,
}

impl Threshold {
    pub fn new(t: f64) -> Result<Self, VtlError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(VtlError::ThresholdOutOfRange(t));
        }
        let repr = format!("{t}");
        let frac = repr.split_once('.').map(|(_, f)| f).unwrap_or("");
        let (num, den) = if frac.len() as u32 <= MAX_DECIMALS {
            let den = 10u64.pow(frac.len() as u32);
            let whole: u64 = if t >= 1.0 { 1 } else { 0 };
            let f: u64 = if frac.is_empty() {
                0
            } else {
                frac.parse().unwrap()
            };
            (whole * den + f, den)
        } else {
            let den = 10u64.pow(MAX_DECIMALS);
            ((t * den as f64).round() as u64, den)
        };
        Ok(Self::reduced(num, den))
    }

    /// Exact `num / den`; `den` must be positive and `num <= den`.
    pub fn from_ratio(num: u64, den: u64) -> Result<Self, VtlError> {
        if den == 0 || num > den {
            return Err(VtlError::ThresholdOutOfRange(if den == 0 {
                f64::NAN
            } else {
                num as f64 / den as f64
            }));
        }
        Ok(Self::reduced(num, den))
    }

    fn reduced(num: u64, den: u64) -> Self {
        let r = Ratio::new(num, den);
        Self {
            num: *r.numer(),
            den: *r.denom(),
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.num, self.den)
    }

    /// `nonzero / total >= self`, exactly. `total` must be positive.
    pub fn admits(&self, nonzero: u64, total: u64) -> bool {
        debug_assert!(total > 0);
        nonzero as u128 * self.den as u128 >= self.num as u128 * total as u128
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Threshold::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VtlCell {
    pub nonzero: u32,
    pub total: u32,
}

impl VtlCell {
    pub fn is_defined(&self) -> bool {
        self.total > 0
    }

    pub fn fraction(&self) -> Option<f64> {
        self.is_defined()
            .then(|| self.nonzero as f64 / self.total as f64)
    }

    pub fn ratio(&self) -> Option<Ratio<u32>> {
        self.is_defined()
            .then(|| Ratio::new(self.nonzero, self.total))
    }
}

/// Per-cell annotation tallies, row-major in text order × task order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtlMatrix {
    pub text_ids: Vec<TextId>,
    pub task_ids: Vec<TaskId>,
    cells: Vec<VtlCell>,
}

impl VtlMatrix {
    pub fn cell(&self, text: usize, task: usize) -> VtlCell {
        self.cells[text * self.task_ids.len() + task]
    }

    pub fn cells(&self) -> &[VtlCell] {
        &self.cells
    }

    pub fn n_undefined(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_defined()).count()
    }
}

/// Tallies non-zero and total annotations for every `(text, task)` pair.
pub fn compute_fractions(corpus: &Corpus) -> VtlMatrix {
    let n_tasks = corpus.n_tasks();
    let mut cells = vec![VtlCell::default(); corpus.n_texts() * n_tasks];
    for a in corpus.annotations() {
        let c = &mut cells[a.text * n_tasks + a.task];
        c.total += 1;
        if a.value != 0 {
            c.nonzero += 1;
        }
    }
    VtlMatrix {
        text_ids: corpus.text_ids(),
        task_ids: corpus.task_ids(),
        cells,
    }
}

/// Binary targets at one threshold; `None` marks an undefined cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtlLabels {
    pub threshold: Threshold,
    pub text_ids: Vec<TextId>,
    pub task_ids: Vec<TaskId>,
    bits: Vec<Option<bool>>,
}

impl VtlLabels {
    /// Builds labels from explicit row-major bits.
    pub fn from_bits(
        threshold: Threshold,
        text_ids: Vec<TextId>,
        task_ids: Vec<TaskId>,
        bits: Vec<Option<bool>>,
    ) -> Self {
        assert_eq!(bits.len(), text_ids.len() * task_ids.len());
        Self {
            threshold,
            text_ids,
            task_ids,
            bits,
        }
    }

    pub fn n_texts(&self) -> usize {
        self.text_ids.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn get(&self, text: usize, task: usize) -> Option<bool> {
        self.bits[text * self.task_ids.len() + task]
    }

    pub fn row(&self, text: usize) -> &[Option<bool>] {
        let k = self.task_ids.len();
        &self.bits[text * k..(text + 1) * k]
    }

    pub fn bits(&self) -> &[Option<bool>] {
        &self.bits
    }

    pub fn n_defined(&self) -> usize {
        self.bits.iter().filter(|b| b.is_some()).count()
    }

    pub fn n_valuable(&self) -> usize {
        self.bits.iter().filter(|b| **b == Some(true)).count()
    }

    pub fn n_invaluable(&self) -> usize {
        self.bits.iter().filter(|b| **b == Some(false)).count()
    }

    /// Labels for the given text rows, in the given order.
    pub fn select_texts(&self, texts: &[usize]) -> VtlLabels {
        let mut bits = Vec::with_capacity(texts.len() * self.n_tasks());
        for &t in texts {
            bits.extend_from_slice(self.row(t));
        }
        VtlLabels {
            threshold: self.threshold,
            text_ids: texts.iter().map(|&t| self.text_ids[t].clone()).collect(),
            task_ids: self.task_ids.clone(),
            bits,
        }
    }

    /// Copy whose defined cells take `bit(text, task)`; undefined cells stay
    /// undefined.
    pub fn relabel(&self, bit: impl Fn(usize, usize) -> bool) -> VtlLabels {
        let k = self.n_tasks();
        let bits = self
            .bits
            .iter()
            .enumerate()
            .map(|(i, b)| b.map(|_| bit(i / k, i % k)))
            .collect();
        VtlLabels {
            threshold: self.threshold,
            text_ids: self.text_ids.clone(),
            task_ids: self.task_ids.clone(),
            bits,
        }
    }
}

/// Applies the threshold rule to every defined cell.
pub fn binarize(matrix: &VtlMatrix, t: f64) -> Result<VtlLabels, VtlError> {
    Ok(binarize_at(matrix, Threshold::new(t)?))
}

pub fn binarize_at(matrix: &VtlMatrix, threshold: Threshold) -> VtlLabels {
    let bits = matrix
        .cells
        .iter()
        .map(|c| {
            c.is_defined()
                .then(|| threshold.admits(c.nonzero as u64, c.total as u64))
        })
        .collect();
    VtlLabels {
        threshold,
        text_ids: matrix.text_ids.clone(),
        task_ids: matrix.task_ids.clone(),
        bits,
    }
}

/// Convenience: tallies and binarizes in one call.
pub fn labels_for(corpus: &Corpus, threshold: Threshold) -> VtlLabels {
    binarize_at(&compute_fractions(corpus), threshold)
}

/// Writes `text_id,task,nonzero,total,fraction,bit`. Undefined cells get
/// empty `fraction` and `bit` fields.
pub fn write_vtl_csv<W: Write>(
    matrix: &VtlMatrix,
    labels: &VtlLabels,
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["text_id", "task", "nonzero", "total", "fraction", "bit"])?;
    let k = matrix.task_ids.len();
    for (d, text) in matrix.text_ids.iter().enumerate() {
        for (l, task) in matrix.task_ids.iter().enumerate() {
            let c = matrix.cells[d * k + l];
            let fraction = c.fraction().map(|f| f.to_string()).unwrap_or_default();
            let bit = labels
                .get(d, l)
                .map(|b| (b as u8).to_string())
                .unwrap_or_default();
            w.write_record([
                text.as_str(),
                task.as_str(),
                &c.nonzero.to_string(),
                &c.total.to_string(),
                &fraction,
                &bit,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
