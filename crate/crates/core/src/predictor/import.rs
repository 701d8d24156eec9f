//! Loading externally produced predictions.

use super::{PredictionSet, PredictorError, DECISION_THRESHOLD};
use crate::corpus::{TaskId, TextId};
use fnv::FnvHashMap;
use std::io::Read;
use std::path::Path;

/// Reads a `text_id,task,bit[,score]` CSV covering exactly the given grid.
///
/// When a score is present the bit must equal `score >= 0.5`; otherwise the
/// score is taken to be the bit.
pub fn read_predictions<R: Read>(
    reader: R,
    text_ids: &[TextId],
    task_ids: &[TaskId],
) -> Result<PredictionSet, PredictorError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let malformed = |line: u64, reason: String| PredictorError::MalformedRow { line, reason };
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 3 || names[..3] != ["text_id", "task", "bit"] || names.len() > 4 {
        return Err(malformed(
            1,
            format!(
                "expected header text_id,task,bit[,score], got {}",
                names.join(",")
            ),
        ));
    }
    if names.len() == 4 && names[3] != "score" {
        return Err(malformed(1, format!("unexpected column {}", names[3])));
    }

    let text_index: FnvHashMap<&TextId, usize> =
        text_ids.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let task_index: FnvHashMap<&TaskId, usize> =
        task_ids.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let k = task_ids.len();
    let mut scores: Vec<Option<f64>> = vec![None; text_ids.len() * k];

    for (n, row) in rdr.records().enumerate() {
        let line = n as u64 + 2;
        let row = row.map_err(|e| malformed(line, e.to_string()))?;
        if row.len() < 3 || row.len() > names.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, got {}", names.len(), row.len()),
            ));
        }
        let text = TextId::from(&row[0]);
        let task = TaskId::from(&row[1]);
        let bit = match &row[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(malformed(
                    line,
                    format!("bit must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let score = match row.get(3) {
            Some(s) if !s.is_empty() => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| malformed(line, format!("score is not a number: {s:?}")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(malformed(line, format!("score {v} outside [0, 1]")));
                }
                if (v >= DECISION_THRESHOLD) != bit {
                    return Err(malformed(
                        line,
                        format!("bit {} disagrees with score {v}", bit as u8),
                    ));
                }
                v
            }
            _ => bit as u8 as f64,
        };
        let (Some(&d), Some(&l)) = (text_index.get(&text), task_index.get(&task)) else {
            return Err(PredictorError::UnexpectedCell(text, task));
        };
        let slot = &mut scores[d * k + l];
        if slot.is_some() {
            return Err(PredictorError::DuplicateCell(text, task));
        }
        *slot = Some(score);
    }

    let mut dense = Vec::with_capacity(scores.len());
    for (i, s) in scores.into_iter().enumerate() {
        match s {
            Some(v) => dense.push(v),
            None => {
                return Err(PredictorError::MissingCell(
                    text_ids[i / k].clone(),
                    task_ids[i % k].clone(),
                ))
            }
        }
    }
    Ok(PredictionSet::from_scores(
        text_ids.to_vec(),
        task_ids.to_vec(),
        dense,
    ))
}

pub fn import_predictions(
    path: &Path,
    text_ids: &[TextId],
    task_ids: &[TaskId],
) -> Result<PredictionSet, PredictorError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PredictorError::Io(format!("{}: {e}", path.display())))?;
    read_predictions(file, text_ids, task_ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> (Vec<TextId>, Vec<TaskId>) {
        (vec!["a".into(), "b".into()], vec!["x".into()])
    }

    #[test]
    fn reads_bits_and_scores() {
        let (texts, tasks) = grid();
        let csv = "text_id,task,bit,score\nb,x,1,0.9\na,x,0,\n";
        let p = read_predictions(csv.as_bytes(), &texts, &tasks).unwrap();
        assert!(!p.bit(0, 0));
        assert_eq!(p.score(1, 0), 0.9);
        let p = read_predictions(
            "text_id,task,bit\na,x,1\nb,x,0\n".as_bytes(),
            &texts,
            &tasks,
        )
        .unwrap();
        assert!(p.bit(0, 0) && !p.bit(1, 0));
    }

    #[test]
    fn grid_errors() {
        let (texts, tasks) = grid();
        let r = |s: &str| read_predictions(s.as_bytes(), &texts, &tasks).unwrap_err();
        assert!(matches!(
            r("text_id,task,bit\na,x,1\n"),
            PredictorError::MissingCell(..)
        ));
        assert!(matches!(
            r("text_id,task,bit\na,x,1\na,x,1\nb,x,0\n"),
            PredictorError::DuplicateCell(..)
        ));
        assert!(matches!(
            r("text_id,task,bit\na,x,1\nb,x,0\nc,x,0\n"),
            PredictorError::UnexpectedCell(..)
        ));
        assert!(matches!(
            r("text_id,task,bit,score\na,x,1,0.2\nb,x,0,0.1\n"),
            PredictorError::MalformedRow { line: 2, .. }
        ));
        assert!(matches!(
            r("text,task,bit\n"),
            PredictorError::MalformedRow { line: 1, .. }
        ));
        assert!(matches!(
            r("text_id,task,bit\na,x,2\n"),
            PredictorError::MalformedRow { line: 2, .. }
        ));
    }
}
