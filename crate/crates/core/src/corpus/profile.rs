use super::Corpus;
use fnv::FnvHashSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dataset summary in the shape of a corpus statistics table.
///
/// An "annotation" is a distinct `(text, annotator)` pair with at least one
/// label; an "annotated label" is a single record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub n_texts: usize,
    pub n_tasks: usize,
    pub n_annotators: usize,
    pub n_annotations: usize,
    pub n_annotated_labels: usize,
    pub avg_annotations_per_text: f64,
    pub avg_annotations_per_annotator: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("corpus is empty")]
    EmptyCorpus,
}

pub fn profile(corpus: &Corpus) -> Result<DatasetProfile, ProfileError> {
    if corpus.n_texts() == 0 {
        return Err(ProfileError::EmptyCorpus);
    }
    let pairs: FnvHashSet<(usize, usize)> = corpus
        .annotations()
        .iter()
        .map(|a| (a.text, a.annotator))
        .collect();
    let n_annotations = pairs.len();
    let n_annotators = corpus.annotators().len();
    Ok(DatasetProfile {
        n_texts: corpus.n_texts(),
        n_tasks: corpus.n_tasks(),
        n_annotators,
        n_annotations,
        n_annotated_labels: corpus.annotations().len(),
        avg_annotations_per_text: n_annotations as f64 / corpus.n_texts() as f64,
        avg_annotations_per_annotator: if n_annotators == 0 {
            0.0
        } else {
            n_annotations as f64 / n_annotators as f64
        },
    })
}
