//! Multi-task, multi-annotator annotation corpora.
//!
//! A [`Corpus`] holds texts, an ordered list of task schemas, and the raw
//! annotation records. Records are stored in long form, one value per
//! `(text, annotator, task)` triple; a missing triple means the annotator
//! never labelled that task for that text. Missing cells are never imputed.

mod ingest;
mod profile;
mod synthetic;

pub use ingest::{
    export_long_csv, ingest, ingest_reader, read_schema, read_texts, IngestError, IngestFormat,
    IngestOptions, ValidityHook,
};
pub use profile::{profile, DatasetProfile, ProfileError};
pub use synthetic::{
    generate_synthetic, generate_synthetic_detailed, SyntheticCorpus, SyntheticError, SyntheticSpec,
};

use fnv::FnvHashMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(TextId);
string_id!(TaskId);
string_id!(AnnotatorId);

/// How a downstream model treats a task's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlKind {
    Binary,
    Ordinal,
}

/// One labelling task. Its value domain is always `[0, hi]`; zero is the
/// "irrelevant" class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSchema {
    pub task_id: TaskId,
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    pub ml_kind: MlKind,
}

impl TaskSchema {
    pub fn new(task_id: impl Into<TaskId>, lo: i64, hi: i64, ml_kind: MlKind) -> Self {
        let task_id = task_id.into();
        Self {
            name: task_id.0.clone(),
            task_id,
            lo,
            hi,
            ml_kind,
        }
    }

    pub fn contains(&self, value: i64) -> bool {
        (self.lo..=self.hi).contains(&value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TextDoc {
    pub text_id: TextId,
    pub content: String,
}

impl TextDoc {
    pub fn new(text_id: impl Into<TextId>, content: impl Into<String>) -> Self {
        Self {
            text_id: text_id.into(),
            content: content.into(),
        }
    }
}

/// An annotation record with resolved identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub text_id: TextId,
    pub annotator_id: AnnotatorId,
    pub task_id: TaskId,
    pub value: i64,
}

impl AnnotationRecord {
    pub fn new(
        text_id: impl Into<TextId>,
        annotator_id: impl Into<AnnotatorId>,
        task_id: impl Into<TaskId>,
        value: i64,
    ) -> Self {
        Self {
            text_id: text_id.into(),
            annotator_id: annotator_id.into(),
            task_id: task_id.into(),
            value,
        }
    }
}

/// Index-based record used inside a [`Corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Annotation {
    pub text: usize,
    pub annotator: usize,
    pub task: usize,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("duplicate text id {0}")]
    DuplicateText(TextId),
    #[error("text {0} has empty content")]
    EmptyText(TextId),
    #[error("duplicate task id {0}")]
    DuplicateTask(TaskId),
    #[error("task {task} has invalid domain [{lo}, {hi}]; lo must be 0 and hi >= 1")]
    InvalidDomain { task: TaskId, lo: i64, hi: i64 },
    #[error("unknown text {0}")]
    UnknownText(TextId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("value {value} outside domain of task {task}")]
    DomainViolation { task: TaskId, value: i64 },
    #[error("duplicate annotation for text {text}, annotator {annotator}, task {task}")]
    DuplicateTriple {
        text: TextId,
        annotator: AnnotatorId,
        task: TaskId,
    },
}

/// Immutable annotation store.
///
/// Text order is ingestion order and task order is schema order; both define
/// row/column order in every output. Annotators are kept sorted by id.
/// Annotation order is ingestion order and is significant for round-robin
/// undersampling.
#[derive(Debug, Clone)]
pub struct Corpus {
    texts: Vec<TextDoc>,
    tasks: Vec<TaskSchema>,
    annotators: Vec<AnnotatorId>,
    annotations: Vec<Annotation>,
    text_index: FnvHashMap<TextId, usize>,
    task_index: FnvHashMap<TaskId, usize>,
    annotator_index: FnvHashMap<AnnotatorId, usize>,
}

impl Corpus {
    /// Builds a corpus, validating every invariant.
    pub fn new(
        texts: Vec<TextDoc>,
        tasks: Vec<TaskSchema>,
        records: Vec<AnnotationRecord>,
    ) -> Result<Self, CorpusError> {
        let task_index = index_tasks(&tasks)?;
        let mut text_index = FnvHashMap::default();
        for (i, t) in texts.iter().enumerate() {
            if t.content.trim().is_empty() {
                return Err(CorpusError::EmptyText(t.text_id.clone()));
            }
            if text_index.insert(t.text_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateText(t.text_id.clone()));
            }
        }

        let annotator_set: BTreeSet<&AnnotatorId> =
            records.iter().map(|r| &r.annotator_id).collect();
        let annotators: Vec<AnnotatorId> = annotator_set.into_iter().cloned().collect();
        let annotator_index: FnvHashMap<AnnotatorId, usize> = annotators
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();

        let mut seen = fnv::FnvHashSet::default();
        let mut annotations = Vec::with_capacity(records.len());
        for r in &records {
            let text = *text_index
                .get(&r.text_id)
                .ok_or_else(|| CorpusError::UnknownText(r.text_id.clone()))?;
            let task = *task_index
                .get(&r.task_id)
                .ok_or_else(|| CorpusError::UnknownTask(r.task_id.clone()))?;
            if !tasks[task].contains(r.value) {
                return Err(CorpusError::DomainViolation {
                    task: r.task_id.clone(),
                    value: r.value,
                });
            }
            let annotator = annotator_index[&r.annotator_id];
            if !seen.insert((text, annotator, task)) {
                return Err(CorpusError::DuplicateTriple {
                    text: r.text_id.clone(),
                    annotator: r.annotator_id.clone(),
                    task: r.task_id.clone(),
                });
            }
            annotations.push(Annotation {
                text,
                annotator,
                task,
                value: r.value,
            });
        }

        Ok(Self {
            texts,
            tasks,
            annotators,
            annotations,
            text_index,
            task_index,
            annotator_index,
        })
    }

    pub fn texts(&self) -> &[TextDoc] {
        &self.texts
    }

    pub fn tasks(&self) -> &[TaskSchema] {
        &self.tasks
    }

    pub fn annotators(&self) -> &[AnnotatorId] {
        &self.annotators
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn n_texts(&self) -> usize {
        self.texts.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn text_idx(&self, id: &TextId) -> Option<usize> {
        self.text_index.get(id).copied()
    }

    pub fn task_idx(&self, id: &TaskId) -> Option<usize> {
        self.task_index.get(id).copied()
    }

    pub fn annotator_idx(&self, id: &AnnotatorId) -> Option<usize> {
        self.annotator_index.get(id).copied()
    }

    pub fn task_ids(&self) -> Vec<TaskId> {
        self.tasks.iter().map(|t| t.task_id.clone()).collect()
    }

    pub fn text_ids(&self) -> Vec<TextId> {
        self.texts.iter().map(|t| t.text_id.clone()).collect()
    }

    /// Resolves an index-based annotation back to identifiers.
    pub fn record(&self, a: &Annotation) -> AnnotationRecord {
        AnnotationRecord {
            text_id: self.texts[a.text].text_id.clone(),
            annotator_id: self.annotators[a.annotator].clone(),
            task_id: self.tasks[a.task].task_id.clone(),
            value: a.value,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = AnnotationRecord> + '_ {
        self.annotations.iter().map(|a| self.record(a))
    }

    /// Annotation indices grouped by text, in ingestion order.
    pub fn annotations_by_text(&self) -> Vec<Vec<usize>> {
        let mut by_text = vec![Vec::new(); self.texts.len()];
        for (i, a) in self.annotations.iter().enumerate() {
            by_text[a.text].push(i);
        }
        by_text
    }

    /// Number of distinct annotators that labelled each text.
    pub fn annotation_counts(&self) -> Vec<usize> {
        let mut pairs = fnv::FnvHashSet::default();
        let mut counts = vec![0usize; self.texts.len()];
        for a in &self.annotations {
            if pairs.insert((a.text, a.annotator)) {
                counts[a.text] += 1;
            }
        }
        counts
    }

    /// Sub-corpus restricted to the given texts (kept in corpus order) and
    /// the annotations that reference them.
    pub fn subset(&self, text_indices: &[usize]) -> Corpus {
        let mut keep = vec![false; self.texts.len()];
        for &i in text_indices {
            keep[i] = true;
        }
        let texts: Vec<TextDoc> = self
            .texts
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(t, _)| t.clone())
            .collect();
        let records: Vec<AnnotationRecord> = self
            .annotations
            .iter()
            .filter(|a| keep[a.text])
            .map(|a| self.record(a))
            .collect();
        Corpus::new(texts, self.tasks.clone(), records).expect("subset of a valid corpus is valid")
    }

    /// Same texts and tasks with only the selected annotations, in the given order.
    pub fn with_annotations(&self, annotation_indices: &[usize]) -> Corpus {
        let records = annotation_indices
            .iter()
            .map(|&i| self.record(&self.annotations[i]))
            .collect();
        Corpus::new(self.texts.clone(), self.tasks.clone(), records)
            .expect("annotation subset of a valid corpus is valid")
    }

    /// Concatenates two corpora sharing a task schema. Text ids must be disjoint.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus, CorpusError> {
        let mut texts = self.texts.clone();
        texts.extend(other.texts.iter().cloned());
        let mut records: Vec<AnnotationRecord> = self.records().collect();
        records.extend(other.records());
        Corpus::new(texts, self.tasks.clone(), records)
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty() && self.annotations.is_empty()
    }
}

impl PartialEq for Corpus {
    /// Set equality on texts and annotations; task order must match.
    fn eq(&self, other: &Self) -> bool {
        let texts_a: BTreeSet<(&TextId, &str)> = self
            .texts
            .iter()
            .map(|t| (&t.text_id, t.content.as_str()))
            .collect();
        let texts_b: BTreeSet<(&TextId, &str)> = other
            .texts
            .iter()
            .map(|t| (&t.text_id, t.content.as_str()))
            .collect();
        if self.tasks != other.tasks || texts_a != texts_b {
            return false;
        }
        let recs_a: BTreeSet<AnnotationRecord> = self.records().collect();
        let recs_b: BTreeSet<AnnotationRecord> = other.records().collect();
        recs_a == recs_b
    }
}

fn index_tasks(tasks: &[TaskSchema]) -> Result<FnvHashMap<TaskId, usize>, CorpusError> {
    let mut index = FnvHashMap::default();
    for (i, t) in tasks.iter().enumerate() {
        if t.lo != 0 || t.hi < 1 {
            return Err(CorpusError::InvalidDomain {
                task: t.task_id.clone(),
                lo: t.lo,
                hi: t.hi,
            });
        }
        if index.insert(t.task_id.clone(), i).is_some() {
            return Err(CorpusError::DuplicateTask(t.task_id.clone()));
        }
    }
    Ok(index)
}

/// Checks a schema list on its own.
pub fn validate_schema(tasks: &[TaskSchema]) -> Result<(), CorpusError> {
    index_tasks(tasks).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joy() -> TaskSchema {
        TaskSchema::new("joy", 0, 10, MlKind::Ordinal)
    }

    #[test]
    fn rejects_nonzero_lower_bound() {
        let err = Corpus::new(
            vec![],
            vec![TaskSchema::new("x", 1, 5, MlKind::Ordinal)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::InvalidDomain { .. }));
    }

    #[test]
    fn rejects_duplicate_triple() {
        let err = Corpus::new(
            vec![TextDoc::new("t1", "hello")],
            vec![joy()],
            vec![
                AnnotationRecord::new("t1", "u1", "joy", 3),
                AnnotationRecord::new("t1", "u1", "joy", 4),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateTriple { .. }));
    }

    #[test]
    fn rejects_out_of_domain_and_unknown_refs() {
        let texts = vec![TextDoc::new("t1", "hello")];
        let e = Corpus::new(
            texts.clone(),
            vec![joy()],
            vec![AnnotationRecord::new("t1", "u", "joy", 11)],
        );
        assert!(matches!(
            e,
            Err(CorpusError::DomainViolation { value: 11, .. })
        ));
        let e = Corpus::new(
            texts.clone(),
            vec![joy()],
            vec![AnnotationRecord::new("t2", "u", "joy", 1)],
        );
        assert!(matches!(e, Err(CorpusError::UnknownText(_))));
        let e = Corpus::new(
            texts,
            vec![joy()],
            vec![AnnotationRecord::new("t1", "u", "fear", 1)],
        );
        assert!(matches!(e, Err(CorpusError::UnknownTask(_))));
    }

    #[test]
    fn rejects_blank_text() {
        let e = Corpus::new(vec![TextDoc::new("t1", "  \n")], vec![joy()], vec![]);
        assert!(matches!(e, Err(CorpusError::EmptyText(_))));
    }

    #[test]
    fn subset_keeps_only_selected_texts() {
        let c = Corpus::new(
            vec![
                TextDoc::new("a", "x"),
                TextDoc::new("b", "y"),
                TextDoc::new("c", "z"),
            ],
            vec![joy()],
            vec![
                AnnotationRecord::new("a", "u1", "joy", 1),
                AnnotationRecord::new("b", "u1", "joy", 2),
                AnnotationRecord::new("c", "u2", "joy", 0),
            ],
        )
        .unwrap();
        let s = c.subset(&[2, 0]);
        assert_eq!(s.text_ids(), vec![TextId::from("a"), TextId::from("c")]);
        assert_eq!(s.annotations().len(), 2);
        assert_eq!(s.annotators().len(), 2);
    }

    #[test]
    fn equality_ignores_record_order() {
        let texts = vec![TextDoc::new("a", "x")];
        let r1 = AnnotationRecord::new("a", "u1", "joy", 1);
        let r2 = AnnotationRecord::new("a", "u2", "joy", 0);
        let c1 = Corpus::new(texts.clone(), vec![joy()], vec![r1.clone(), r2.clone()]).unwrap();
        let c2 = Corpus::new(texts, vec![joy()], vec![r2, r1]).unwrap();
        assert_eq!(c1, c2);
    }
}
