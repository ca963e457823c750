//! Corpus ingestion and dataset serialization.
//!
//! All inputs and outputs are line-delimited JSON records, streamable at
//! corpus scale and shard-friendly. Documents keep raw (cased) sentence text
//! plus paragraph structure; metric code tokenizes separately.

use crate::error::{Error, Result};
use crate::segment::segment_sentences;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One sentence with its position inside the owning document (or long
/// answer). `(doc_id, index)` identifies a sentence uniquely in a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub doc_id: String,
    pub index: usize,
}

/// A corpus document: ordered sentences plus the indices where paragraphs
/// start. `paragraph_breaks` is strictly increasing, starts at 0 and every
/// element addresses a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub url: String,
    pub sentences: Vec<Sentence>,
    pub paragraph_breaks: Vec<usize>,
}

impl Document {
    /// Segments `text` and builds a document. Returns `None` when the text
    /// has no sentences.
    pub fn from_text(id: &str, url: &str, text: &str) -> Option<Document> {
        let (sentence_texts, paragraph_breaks) = segment_sentences(text);
        if sentence_texts.is_empty() {
            return None;
        }
        let sentences = sentence_texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence {
                text,
                doc_id: id.to_string(),
                index,
            })
            .collect();
        Some(Document {
            id: id.to_string(),
            url: url.to_string(),
            sentences,
            paragraph_breaks,
        })
    }

    /// Rebuilds the normalized source text: single spaces inside paragraphs,
    /// a blank line between them.
    pub fn normalized_text(&self) -> String {
        let texts: Vec<String> = self.sentences.iter().map(|s| s.text.clone()).collect();
        reconstruct_text(&texts, &self.paragraph_breaks)
    }

    /// Paragraphs as slices of the sentence list, in order.
    pub fn paragraphs(&self) -> Vec<&[Sentence]> {
        let mut out = Vec::with_capacity(self.paragraph_breaks.len());
        for (i, &start) in self.paragraph_breaks.iter().enumerate() {
            let end = self
                .paragraph_breaks
                .get(i + 1)
                .copied()
                .unwrap_or(self.sentences.len());
            out.push(&self.sentences[start..end]);
        }
        out
    }

    fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.sentences.is_empty() {
            return Err("document has no sentences".into());
        }
        if self.paragraph_breaks.first() != Some(&0) {
            return Err("paragraph_breaks must start at 0".into());
        }
        if !self.paragraph_breaks.windows(2).all(|w| w[0] < w[1]) {
            return Err("paragraph_breaks must be strictly increasing".into());
        }
        if self
            .paragraph_breaks
            .iter()
            .any(|&b| b >= self.sentences.len())
        {
            return Err("paragraph break beyond sentence count".into());
        }
        Ok(())
    }
}

/// Joins sentence texts back into normalized source text given paragraph
/// start indices.
pub fn reconstruct_text(sentences: &[String], paragraph_breaks: &[usize]) -> String {
    let mut out = String::new();
    for (i, text) in sentences.iter().enumerate() {
        if i > 0 {
            if paragraph_breaks.contains(&i) {
                out.push_str("\n\n");
            } else {
                out.push(' ');
            }
        }
        out.push_str(text);
    }
    out
}

/// A query paired with its multi-sentence long answer (the mining target).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub example_id: String,
    pub query: String,
    pub answer_sentences: Vec<Sentence>,
}

/// Documents in file order with id lookup. Immutable once loaded; shared
/// freely across threads.
#[derive(Debug, Clone)]
pub struct DocumentCorpus {
    docs: Vec<Document>,
    by_id: BTreeMap<String, usize>,
    skipped_empty: usize,
}

impl DocumentCorpus {
    pub fn new() -> Self {
        DocumentCorpus {
            docs: Vec::new(),
            by_id: BTreeMap::new(),
            skipped_empty: 0,
        }
    }

    pub fn push(&mut self, doc: Document) -> Result<()> {
        doc.check_invariants()
            .map_err(|reason| Error::InvalidConfig {
                field: format!("document {}", doc.id),
                reason,
            })?;
        if self.by_id.contains_key(&doc.id) {
            return Err(Error::DuplicateId { id: doc.id });
        }
        self.by_id.insert(doc.id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Records skipped while loading because their text held no sentences.
    pub fn skipped_empty(&self) -> usize {
        self.skipped_empty
    }
}

impl Default for DocumentCorpus {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Deserialize)]
struct RawDocumentRecord {
    id: String,
    url: String,
    text: String,
}

#[derive(Debug, Serialize)]
struct DocumentRecordOut<'a> {
    id: &'a str,
    url: &'a str,
    text: String,
}

#[derive(Debug, Deserialize)]
struct RawQaRecord {
    example_id: String,
    query: String,
    long_answer: String,
}

#[derive(Debug, Serialize)]
struct QaRecordOut<'a> {
    example_id: &'a str,
    query: &'a str,
    long_answer: String,
}

/// Loads a documents file: one JSON record per line with fields
/// `id`, `url`, `text` (`\n\n` in `text` marks a paragraph break).
/// Record order is preserved; duplicate ids are rejected; records whose
/// text yields no sentences are skipped and counted.
pub fn load_documents(path: &Path) -> Result<DocumentCorpus> {
    let mut corpus = DocumentCorpus::new();
    for (line_no, line) in read_lines(path)?.into_iter() {
        let raw: RawDocumentRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
        match Document::from_text(&raw.id, &raw.url, &raw.text) {
            Some(doc) => corpus.push(doc)?,
            None => corpus.skipped_empty += 1,
        }
    }
    Ok(corpus)
}

/// QA examples plus the count of records rejected for an empty query or an
/// answer with no sentences.
#[derive(Debug, Clone)]
pub struct QaCorpus {
    pub examples: Vec<QaExample>,
    pub skipped: usize,
}

/// Loads a QA file: one JSON record per line with fields `example_id`,
/// `query`, `long_answer`.
pub fn load_qa_examples(path: &Path) -> Result<QaCorpus> {
    let mut examples = Vec::new();
    let mut skipped = 0;
    let mut seen = HashSet::new();
    for (line_no, line) in read_lines(path)?.into_iter() {
        let raw: RawQaRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        if !seen.insert(raw.example_id.clone()) {
            return Err(Error::DuplicateId { id: raw.example_id });
        }
        let (texts, _) = segment_sentences(&raw.long_answer);
        if raw.query.trim().is_empty() || texts.is_empty() {
            skipped += 1;
            continue;
        }
        let answer_sentences = texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence {
                text,
                doc_id: raw.example_id.clone(),
                index,
            })
            .collect();
        examples.push(QaExample {
            example_id: raw.example_id,
            query: raw.query,
            answer_sentences,
        });
    }
    Ok(QaCorpus { examples, skipped })
}

/// Writes corpora back out in normalized form (used by the `ingest` stage so
/// every later stage reads canonical text).
pub fn write_documents(corpus: &DocumentCorpus, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    for doc in corpus.iter() {
        let record = DocumentRecordOut {
            id: &doc.id,
            url: &doc.url,
            text: doc.normalized_text(),
        };
        write_json_line(&mut w, &record, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_qa_examples(examples: &[QaExample], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    for qa in examples {
        let answer_texts: Vec<String> =
            qa.answer_sentences.iter().map(|s| s.text.clone()).collect();
        let record = QaRecordOut {
            example_id: &qa.example_id,
            query: &qa.query,
            long_answer: answer_texts.join(" "),
        };
        write_json_line(&mut w, &record, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dataset variant: targets paired with source documents as mined
/// (`Abstractive`) or with matched sentences substituted by their target
/// sentences (`Extractive`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Abstractive,
    Extractive,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Abstractive => f.write_str("abstractive"),
            Variant::Extractive => f.write_str("extractive"),
        }
    }
}

/// Dataset split label, assigned by hashing the long answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Dev => f.write_str("dev"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// One input document inside a dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDoc {
    pub id: String,
    pub url: String,
    pub text: String,
    pub score: f64,
}

/// One line of a dataset file. This is the on-disk schema shared by the
/// miner output, the baselines (system summaries replace `target`) and the
/// stats/eval commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub example_id: String,
    pub query: String,
    pub target: String,
    pub variant: Variant,
    pub split: Split,
    pub summary_recall: f64,
    pub input_docs: Vec<InputDoc>,
}

/// Writes dataset records, sorted by `example_id`, after checking every
/// record carries `variant`.
pub fn write_dataset(records: &[DatasetRecord], path: &Path, variant: Variant) -> Result<()> {
    for r in records {
        if r.variant != variant {
            return Err(Error::MixedVariants {
                expected: variant.to_string(),
                found: r.variant.to_string(),
            });
        }
    }
    let mut sorted: Vec<&DatasetRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    let mut w = writer(path)?;
    for r in sorted {
        write_json_line(&mut w, r, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset file back. `load(write(x))` equals `x` up to the sort
/// order `write_dataset` imposes.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)?.into_iter() {
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push((i + 1, line));
    }
    Ok(lines)
}

pub(crate) fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub(crate) fn write_json_line<T: Serialize>(
    w: &mut impl Write,
    value: &T,
    path: &Path,
) -> Result<()> {
    let line = serde_json::to_string(value).expect("serializable record");
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}
