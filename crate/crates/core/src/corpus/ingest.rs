//! File ingestion and export.
//!
//! Canonical layout is long form: `text_id,annotator_id,task,value`, one
//! record per line (CSV) or per object (JSONL). Wide CSV
//! (`text_id,annotator_id,<task>...`, empty cell = no annotation) is
//! converted to long form while parsing. Texts live in a companion file
//! with `text_id,content`.

use super::{AnnotationRecord, Corpus, CorpusError, TaskSchema, TextDoc};
use fnv::{FnvHashMap, FnvHashSet};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestFormat {
    LongCsv,
    LongJsonl,
    WideCsv,
}

impl IngestFormat {
    /// Guesses the format from a file extension; `.jsonl` is long JSONL,
    /// anything else long CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => IngestFormat::LongJsonl,
            _ => IngestFormat::LongCsv,
        }
    }
}

impl std::str::FromStr for IngestFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long_csv" => Ok(Self::LongCsv),
            "long_jsonl" => Ok(Self::LongJsonl),
            "wide_csv" => Ok(Self::WideCsv),
            other => Err(format!("unknown format {other}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: value {value} outside domain of task {task}")]
    DomainViolation { line: u64, task: String, value: i64 },
    #[error("line {line}: duplicate (text, annotator, task) triple")]
    DuplicateTriple { line: u64 },
    #[error("line {line}: unknown task {task}")]
    UnknownTask { line: u64, task: String },
    #[error("line {line}: unknown text {text}")]
    UnknownText { line: u64, text: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl IngestError {
    /// Short machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::MalformedRow { .. } => "MalformedRow",
            IngestError::DomainViolation { .. } => "DomainViolation",
            IngestError::DuplicateTriple { .. } => "DuplicateTriple",
            IngestError::UnknownTask { .. } => "UnknownTask",
            IngestError::UnknownText { .. } => "UnknownText",
            IngestError::SchemaMismatch(_) => "SchemaMismatch",
            IngestError::Schema(_) => "InvalidSchema",
            IngestError::Corpus(_) => "InvalidCorpus",
            IngestError::Io(_) => "Io",
        }
    }
}

/// Predicate deciding whether a parsed record is kept. Rejected records are
/// dropped silently (their count is logged).
pub type ValidityHook = Box<dyn Fn(&AnnotationRecord) -> bool + Send + Sync>;

#[derive(Default)]
pub struct IngestOptions {
    pub validity: Option<ValidityHook>,
}

#[derive(Deserialize)]
struct SchemaEntry {
    task_id: String,
    #[serde(default)]
    name: Option<String>,
    lo: i64,
    hi: i64,
    ml_kind: super::MlKind,
}

/// Reads a JSON schema file: a list of `{task_id, name, lo, hi, ml_kind}`.
pub fn read_schema(path: &Path) -> Result<Vec<TaskSchema>, IngestError> {
    let entries: Vec<SchemaEntry> = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| IngestError::Schema(e.to_string()))?;
    let tasks: Vec<TaskSchema> = entries
        .into_iter()
        .map(|e| TaskSchema {
            name: e.name.unwrap_or_else(|| e.task_id.clone()),
            task_id: e.task_id.into(),
            lo: e.lo,
            hi: e.hi,
            ml_kind: e.ml_kind,
        })
        .collect();
    super::validate_schema(&tasks).map_err(|e| IngestError::Schema(e.to_string()))?;
    Ok(tasks)
}

/// Reads a texts file; `.jsonl` files hold `{text_id, content}` objects,
/// anything else is CSV with a `text_id,content` header.
pub fn read_texts(path: &Path) -> Result<Vec<TextDoc>, IngestError> {
    let file = File::open(path)?;
    match IngestFormat::from_path(path) {
        IngestFormat::LongJsonl => read_texts_jsonl(file),
        _ => read_texts_csv(file),
    }
}

fn read_texts_csv<R: Read>(reader: R) -> Result<Vec<TextDoc>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(reader);
    let headers = read_header(&mut rdr)?;
    let id_col = column(&headers, "text_id")?;
    let content_col = column(&headers, "content")?;
    let mut texts = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row_line(&row);
        texts.push(TextDoc {
            text_id: field(&row, id_col, line)?.into(),
            content: field(&row, content_col, line)?.to_string(),
        });
    }
    Ok(texts)
}

#[derive(Deserialize)]
struct TextLine {
    text_id: String,
    content: String,
}

fn read_texts_jsonl<R: Read>(reader: R) -> Result<Vec<TextDoc>, IngestError> {
    let mut texts = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TextLine = serde_json::from_str(&line).map_err(|e| IngestError::MalformedRow {
            line: line_no,
            reason: e.to_string(),
        })?;
        texts.push(TextDoc::new(t.text_id, t.content));
    }
    Ok(texts)
}

/// Loads a corpus from an annotations file, a texts file and a schema.
pub fn ingest(
    annotations: &Path,
    texts: &Path,
    format: IngestFormat,
    schema: &[TaskSchema],
    options: &IngestOptions,
) -> Result<Corpus, IngestError> {
    let texts = read_texts(texts)?;
    let file = File::open(annotations)?;
    ingest_reader(file, texts, format, schema, options)
}

/// Same as [`ingest`] over an in-memory annotation source.
pub fn ingest_reader<R: Read>(
    reader: R,
    texts: Vec<TextDoc>,
    format: IngestFormat,
    schema: &[TaskSchema],
    options: &IngestOptions,
) -> Result<Corpus, IngestError> {
    super::validate_schema(schema).map_err(|e| IngestError::Schema(e.to_string()))?;
    let rows = match format {
        IngestFormat::LongCsv => parse_long_csv(reader)?,
        IngestFormat::LongJsonl => parse_long_jsonl(reader)?,
        IngestFormat::WideCsv => parse_wide_csv(reader, schema)?,
    };

    let text_ids: FnvHashSet<&str> = texts.iter().map(|t| t.text_id.as_str()).collect();
    let tasks: FnvHashMap<&str, &TaskSchema> =
        schema.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut seen = FnvHashSet::default();
    let mut records = Vec::with_capacity(rows.len());
    let mut rejected = 0usize;
    for (line, rec) in rows {
        let task = tasks
            .get(rec.task_id.as_str())
            .ok_or_else(|| IngestError::UnknownTask {
                line,
                task: rec.task_id.0.clone(),
            })?;
        if !task.contains(rec.value) {
            return Err(IngestError::DomainViolation {
                line,
                task: rec.task_id.0.clone(),
                value: rec.value,
            });
        }
        if !text_ids.contains(rec.text_id.as_str()) {
            return Err(IngestError::UnknownText {
                line,
                text: rec.text_id.0.clone(),
            });
        }
        if let Some(valid) = &options.validity {
            if !valid(&rec) {
                rejected += 1;
                continue;
            }
        }
        if !seen.insert((
            rec.text_id.clone(),
            rec.annotator_id.clone(),
            rec.task_id.clone(),
        )) {
            return Err(IngestError::DuplicateTriple { line });
        }
        records.push(rec);
    }
    if rejected > 0 {
        log::info!("validity hook rejected {rejected} annotation records");
    }
    Ok(Corpus::new(texts, schema.to_vec(), records)?)
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

fn read_header<R: Read>(rdr: &mut csv::Reader<R>) -> Result<csv::StringRecord, IngestError> {
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(IngestError::MalformedRow {
            line: 0,
            reason: "empty file".into(),
        });
    }
    Ok(headers)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MalformedRow {
            line: 1,
            reason: format!("missing column {name}"),
        })
}

fn row_line(row: &csv::StringRecord) -> u64 {
    row.position().map(|p| p.line()).unwrap_or(0)
}

fn field(row: &csv::StringRecord, col: usize, line: u64) -> Result<&str, IngestError> {
    row.get(col).ok_or_else(|| IngestError::MalformedRow {
        line,
        reason: format!("missing field {col}"),
    })
}

fn parse_value(raw: &str, line: u64) -> Result<i64, IngestError> {
    raw.trim()
        .parse::<i64>()
        .map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("value {raw:?} is not an integer"),
        })
}

fn parse_long_csv<R: Read>(reader: R) -> Result<Vec<(u64, AnnotationRecord)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = read_header(&mut rdr)?;
    let cols = [
        column(&headers, "text_id")?,
        column(&headers, "annotator_id")?,
        column(&headers, "task")?,
        column(&headers, "value")?,
    ];
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row_line(&row);
        out.push((
            line,
            AnnotationRecord::new(
                field(&row, cols[0], line)?,
                field(&row, cols[1], line)?,
                field(&row, cols[2], line)?,
                parse_value(field(&row, cols[3], line)?, line)?,
            ),
        ));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonRecord {
    text_id: String,
    annotator_id: String,
    task: String,
    value: serde_json::Value,
}

fn parse_long_jsonl<R: Read>(reader: R) -> Result<Vec<(u64, AnnotationRecord)>, IngestError> {
    let mut out = Vec::new();
    let mut any = false;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        any = true;
        let rec: JsonRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedRow {
                line: line_no,
                reason: e.to_string(),
            })?;
        let value = rec
            .value
            .as_i64()
            .ok_or_else(|| IngestError::MalformedRow {
                line: line_no,
                reason: format!("value {} is not an integer", rec.value),
            })?;
        out.push((
            line_no,
            AnnotationRecord::new(rec.text_id, rec.annotator_id, rec.task, value),
        ));
    }
    if !any {
        return Err(IngestError::MalformedRow {
            line: 0,
            reason: "empty file".into(),
        });
    }
    Ok(out)
}

fn parse_wide_csv<R: Read>(
    reader: R,
    schema: &[TaskSchema],
) -> Result<Vec<(u64, AnnotationRecord)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = read_header(&mut rdr)?;
    let text_col = column(&headers, "text_id")?;
    let ann_col = column(&headers, "annotator_id")?;
    let task_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != text_col && *i != ann_col)
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();
    let known: FnvHashSet<&str> = schema.iter().map(|t| t.task_id.as_str()).collect();
    for (_, name) in &task_cols {
        if !known.contains(name.as_str()) {
            return Err(IngestError::UnknownTask {
                line: 1,
                task: name.clone(),
            });
        }
    }
    if task_cols.len() != schema.len() {
        return Err(IngestError::SchemaMismatch(format!(
            "file has {} task columns, schema has {} tasks",
            task_cols.len(),
            schema.len()
        )));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row_line(&row);
        let text = field(&row, text_col, line)?;
        let annotator = field(&row, ann_col, line)?;
        for (col, task) in &task_cols {
            let raw = field(&row, *col, line)?;
            if raw.trim().is_empty() {
                continue;
            }
            out.push((
                line,
                AnnotationRecord::new(text, annotator, task.as_str(), parse_value(raw, line)?),
            ));
        }
    }
    Ok(out)
}

/// Writes a corpus as canonical long CSV plus its texts file.
pub fn export_long_csv<W1: Write, W2: Write>(
    corpus: &Corpus,
    annotations: W1,
    texts: W2,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(annotations);
    w.write_record(["text_id", "annotator_id", "task", "value"])
        .map_err(csv_error)?;
    for r in corpus.records() {
        w.write_record([
            r.text_id.as_str(),
            r.annotator_id.as_str(),
            r.task_id.as_str(),
            &r.value.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(texts);
    w.write_record(["text_id", "content"]).map_err(csv_error)?;
    for t in corpus.texts() {
        w.write_record([t.text_id.as_str(), t.content.as_str()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MlKind;

    fn schema() -> Vec<TaskSchema> {
        vec![
            TaskSchema::new("joy", 0, 10, MlKind::Ordinal),
            TaskSchema::new("fear", 0, 10, MlKind::Ordinal),
        ]
    }

    fn texts() -> Vec<TextDoc> {
        vec![
            TextDoc::new("t1", "some text"),
            TextDoc::new("t2", "other, \"quoted\" text"),
        ]
    }

    fn long(src: &str) -> Result<Corpus, IngestError> {
        ingest_reader(
            src.as_bytes(),
            texts(),
            IngestFormat::LongCsv,
            &schema(),
            &IngestOptions::default(),
        )
    }

    #[test]
    fn empty_file_is_malformed_row_zero() {
        assert!(matches!(
            long(""),
            Err(IngestError::MalformedRow { line: 0, .. })
        ));
        let e = ingest_reader(
            "".as_bytes(),
            texts(),
            IngestFormat::LongJsonl,
            &schema(),
            &IngestOptions::default(),
        );
        assert!(matches!(e, Err(IngestError::MalformedRow { line: 0, .. })));
    }

    #[test]
    fn single_row() {
        let c = long("text_id,annotator_id,task,value\nt1,u1,joy,7\n").unwrap();
        assert_eq!(c.annotations().len(), 1);
        assert_eq!(c.annotations()[0].value, 7);
    }

    #[test]
    fn out_of_domain_reports_line() {
        let e = long("text_id,annotator_id,task,value\nt1,u1,joy,7\nt1,u2,joy,11\n").unwrap_err();
        match e {
            IngestError::DomainViolation { line, value, .. } => {
                assert_eq!(line, 3);
                assert_eq!(value, 11);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_rejected() {
        let e = long("text_id,annotator_id,task,value\nt1,u1,joy,7.5\n").unwrap_err();
        assert!(matches!(e, IngestError::MalformedRow { line: 2, .. }));
        let e = ingest_reader(
            r#"{"text_id":"t1","annotator_id":"u1","task":"joy","value":7.0}"#.as_bytes(),
            texts(),
            IngestFormat::LongJsonl,
            &schema(),
            &IngestOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(e, IngestError::MalformedRow { line: 1, .. }));
    }

    #[test]
    fn duplicate_and_unknown() {
        let e = long("text_id,annotator_id,task,value\nt1,u1,joy,7\nt1,u1,joy,3\n").unwrap_err();
        assert!(matches!(e, IngestError::DuplicateTriple { line: 3 }));
        let e = long("text_id,annotator_id,task,value\nt1,u1,anger,7\n").unwrap_err();
        assert!(matches!(e, IngestError::UnknownTask { line: 2, .. }));
        let e = long("text_id,annotator_id,task,value\nt9,u1,joy,7\n").unwrap_err();
        assert!(matches!(e, IngestError::UnknownText { line: 2, .. }));
    }

    #[test]
    fn wide_csv_skips_blank_cells() {
        let c = ingest_reader(
            "text_id,annotator_id,joy,fear\nt1,u1,3,\nt2,u1,0,4\n".as_bytes(),
            texts(),
            IngestFormat::WideCsv,
            &schema(),
            &IngestOptions::default(),
        )
        .unwrap();
        assert_eq!(c.annotations().len(), 3);
        let long_form =
            long("text_id,annotator_id,task,value\nt1,u1,joy,3\nt2,u1,joy,0\nt2,u1,fear,4\n")
                .unwrap();
        assert_eq!(c, long_form);
    }

    #[test]
    fn wide_csv_unknown_column() {
        let e = ingest_reader(
            "text_id,annotator_id,joy,anger\nt1,u1,3,1\n".as_bytes(),
            texts(),
            IngestFormat::WideCsv,
            &schema(),
            &IngestOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(e, IngestError::UnknownTask { line: 1, .. }));
    }

    #[test]
    fn validity_hook_drops_records() {
        let opts = IngestOptions {
            validity: Some(Box::new(|r: &AnnotationRecord| {
                r.annotator_id.as_str() != "bot"
            })),
        };
        let c = ingest_reader(
            "text_id,annotator_id,task,value\nt1,u1,joy,7\nt1,bot,joy,3\n".as_bytes(),
            texts(),
            IngestFormat::LongCsv,
            &schema(),
            &opts,
        )
        .unwrap();
        assert_eq!(c.annotations().len(), 1);
    }

    #[test]
    fn csv_export_round_trip_with_quoting() {
        let c = long("text_id,annotator_id,task,value\nt1,u1,joy,7\nt2,u2,fear,0\n").unwrap();
        let mut ann = Vec::new();
        let mut txt = Vec::new();
        export_long_csv(&c, &mut ann, &mut txt).unwrap();
        let texts = read_texts_csv(txt.as_slice()).unwrap();
        let back = ingest_reader(
            ann.as_slice(),
            texts,
            IngestFormat::LongCsv,
            &schema(),
            &IngestOptions::default(),
        )
        .unwrap();
        assert_eq!(back, c);
    }
}
