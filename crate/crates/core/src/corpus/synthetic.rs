//! Seeded synthetic corpora with a planted lexical signal.
//!
//! Every task owns a small trigger vocabulary. A text is "triggered" for a
//! random subset of tasks and carries some of their trigger tokens among
//! filler words. Annotators give a non-zero grade on triggered cells with
//! probability `p_hit` and on the rest with probability `p_noise`.

use super::{AnnotationRecord, Corpus, MlKind, TaskSchema, TextDoc};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_texts: usize,
    pub n_tasks: usize,
    pub n_annotators: usize,
    pub annotators_per_text: usize,
    pub triggers_per_task: usize,
    /// Inclusive range for how many tasks each text is triggered for.
    pub tasks_per_text: (usize, usize),
    pub p_hit: f64,
    pub p_noise: f64,
    /// Per-task override of `p_hit`.
    pub p_hit_per_task: Option<Vec<f64>>,
    /// Upper end of every task's value domain; non-zero grades are uniform on `[1, value_hi]`.
    pub value_hi: i64,
    pub filler_vocab: usize,
    /// Inclusive range of filler tokens per text.
    pub filler_tokens: (usize, usize),
    /// Inclusive range of trigger tokens inserted per triggered task.
    pub trigger_tokens: (usize, usize),
    /// `(source, follower)` pairs: the follower task is triggered exactly
    /// when the source is and shares its trigger vocabulary.
    pub correlated: Vec<(usize, usize)>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_texts: 200,
            n_tasks: 5,
            n_annotators: 20,
            annotators_per_text: 8,
            triggers_per_task: 5,
            tasks_per_text: (1, 2),
            p_hit: 0.9,
            p_noise: 0.05,
            p_hit_per_task: None,
            value_hi: 10,
            filler_vocab: 400,
            filler_tokens: (8, 16),
            trigger_tokens: (1, 2),
            correlated: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// A generated corpus together with its planted trigger matrix.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// `triggered[text][task]`
    pub triggered: Vec<Vec<bool>>,
}

impl SyntheticSpec {
    pub fn task_id(task: usize) -> String {
        format!("task{task}")
    }

    pub fn trigger_token(task: usize, j: usize) -> String {
        format!("trig{task}x{j}")
    }

    fn filler_token(j: usize) -> String {
        format!("w{j}")
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        if self.n_texts == 0 || self.n_tasks == 0 || self.n_annotators == 0 {
            return bad("n_texts, n_tasks and n_annotators must be positive");
        }
        if self.annotators_per_text == 0 || self.annotators_per_text > self.n_annotators {
            return bad("annotators_per_text must be in [1, n_annotators]");
        }
        if self.triggers_per_task == 0 || self.filler_vocab == 0 {
            return bad("vocabularies must be non-empty");
        }
        let (lo, hi) = self.tasks_per_text;
        if lo > hi || hi > self.n_tasks {
            return bad("tasks_per_text must satisfy lo <= hi <= n_tasks");
        }
        if self.filler_tokens.0 > self.filler_tokens.1
            || self.trigger_tokens.0 > self.trigger_tokens.1
            || self.trigger_tokens.1 == 0
        {
            return bad("token ranges must be ordered and trigger range non-empty");
        }
        let probs = [self.p_hit, self.p_noise];
        let extra = self.p_hit_per_task.iter().flatten();
        if probs.iter().chain(extra).any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if let Some(v) = &self.p_hit_per_task {
            if v.len() != self.n_tasks {
                return bad("p_hit_per_task must have one entry per task");
            }
        }
        if self.value_hi < 1 {
            return bad("value_hi must be at least 1");
        }
        for &(s, f) in &self.correlated {
            if s >= self.n_tasks || f >= self.n_tasks || s == f {
                return bad("correlated pairs must name two distinct tasks");
            }
        }
        Ok(())
    }

    fn p_hit_for(&self, task: usize) -> f64 {
        self.p_hit_per_task
            .as_ref()
            .map(|v| v[task])
            .unwrap_or(self.p_hit)
    }
}

/// Generates a corpus as a pure function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Corpus, SyntheticError> {
    generate_synthetic_detailed(spec, seed).map(|s| s.corpus)
}

pub fn generate_synthetic_detailed(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<SyntheticCorpus, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = if spec.value_hi == 1 {
        MlKind::Binary
    } else {
        MlKind::Ordinal
    };
    let tasks: Vec<TaskSchema> = (0..spec.n_tasks)
        .map(|t| TaskSchema::new(SyntheticSpec::task_id(t), 0, spec.value_hi, kind))
        .collect();
    let followers: Vec<Option<usize>> = (0..spec.n_tasks)
        .map(|t| {
            spec.correlated
                .iter()
                .find(|(_, f)| *f == t)
                .map(|(s, _)| *s)
        })
        .collect();
    let annotator_ids: Vec<String> = (0..spec.n_annotators).map(|a| format!("a{a:03}")).collect();

    let mut texts = Vec::with_capacity(spec.n_texts);
    let mut records = Vec::new();
    let mut triggered_all = Vec::with_capacity(spec.n_texts);
    for d in 0..spec.n_texts {
        let k = rng.random_range(spec.tasks_per_text.0..=spec.tasks_per_text.1);
        let mut triggered = vec![false; spec.n_tasks];
        for t in index::sample(&mut rng, spec.n_tasks, k) {
            triggered[t] = true;
        }
        for (t, src) in followers.iter().enumerate() {
            if let Some(s) = src {
                triggered[t] = triggered[*s];
            }
        }

        let n_fill = rng.random_range(spec.filler_tokens.0..=spec.filler_tokens.1);
        let mut tokens: Vec<String> = (0..n_fill)
            .map(|_| SyntheticSpec::filler_token(rng.random_range(0..spec.filler_vocab)))
            .collect();
        for t in 0..spec.n_tasks {
            if triggered[t] && followers[t].is_none() {
                let n = rng.random_range(spec.trigger_tokens.0..=spec.trigger_tokens.1);
                for _ in 0..n.max(1) {
                    let j = rng.random_range(0..spec.triggers_per_task);
                    tokens.push(SyntheticSpec::trigger_token(t, j));
                }
            }
        }
        tokens.shuffle(&mut rng);
        let text_id = format!("d{d:05}");
        texts.push(TextDoc::new(text_id.clone(), tokens.join(" ")));

        let mut who: Vec<usize> =
            index::sample(&mut rng, spec.n_annotators, spec.annotators_per_text).into_vec();
        who.sort_unstable();
        for a in who {
            for (t, task) in tasks.iter().enumerate() {
                let p = if triggered[t] {
                    spec.p_hit_for(t)
                } else {
                    spec.p_noise
                };
                let value = if rng.random_bool(p) {
                    rng.random_range(1..=spec.value_hi)
                } else {
                    0
                };
                records.push(AnnotationRecord::new(
                    text_id.as_str(),
                    annotator_ids[a].as_str(),
                    task.task_id.clone(),
                    value,
                ));
            }
        }
        triggered_all.push(triggered);
    }
    let corpus = Corpus::new(texts, tasks, records).expect("generated corpus is valid");
    Ok(SyntheticCorpus {
        corpus,
        triggered: triggered_all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_one_case() {
        let spec = SyntheticSpec {
            n_texts: 1,
            n_tasks: 1,
            n_annotators: 1,
            annotators_per_text: 1,
            tasks_per_text: (1, 1),
            p_hit: 1.0,
            p_noise: 0.0,
            ..Default::default()
        };
        let s = generate_synthetic_detailed(&spec, 3).unwrap();
        assert!(s.triggered[0][0]);
        let nonzero = s
            .corpus
            .annotations()
            .iter()
            .filter(|a| a.value != 0)
            .count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn hit_rate_on_triggered_cells() {
        let spec = SyntheticSpec {
            n_texts: 200,
            n_tasks: 5,
            n_annotators: 20,
            ..Default::default()
        };
        let s = generate_synthetic_detailed(&spec, 7).unwrap();
        let (mut hits, mut total) = (0usize, 0usize);
        for a in s.corpus.annotations() {
            if s.triggered[a.text][a.task] {
                total += 1;
                hits += (a.value != 0) as usize;
            }
        }
        let rate = hits as f64 / total as f64;
        assert!((rate - 0.9).abs() <= 0.05, "rate {rate}");
    }

    #[test]
    fn seeds_differ_and_repeat() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(&spec, 7).unwrap();
        let b = generate_synthetic(&spec, 7).unwrap();
        let c = generate_synthetic(&spec, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.annotations(), b.annotations());
        assert_ne!(a, c);
    }

    #[test]
    fn trigger_vocab_disjoint_from_filler() {
        let s = generate_synthetic(&SyntheticSpec::default(), 1).unwrap();
        for t in s.texts() {
            for tok in t.content.split(' ') {
                assert!(tok.starts_with('w') || tok.starts_with("trig"));
            }
        }
    }

    #[test]
    fn correlated_follower_tracks_source() {
        let spec = SyntheticSpec {
            n_tasks: 3,
            correlated: vec![(0, 2)],
            ..Default::default()
        };
        let s = generate_synthetic_detailed(&spec, 5).unwrap();
        assert!(s.triggered.iter().all(|t| t[0] == t[2]));
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SyntheticSpec {
                n_texts: 0,
                ..Default::default()
            },
            SyntheticSpec {
                annotators_per_text: 21,
                ..Default::default()
            },
            SyntheticSpec {
                p_hit: 1.5,
                ..Default::default()
            },
            SyntheticSpec {
                tasks_per_text: (3, 2),
                ..Default::default()
            },
        ] {
            assert!(generate_synthetic(&spec, 0).is_err());
        }
    }
}
