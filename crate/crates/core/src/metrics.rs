//! Dataset diagnostics and summarization metrics.
//!
//! Extractive fragments follow the greedy longest-match scan; coverage is
//! the fraction of summary tokens inside fragments and density is the
//! squared-length statistic, reported here normalized by summary length so
//! it stays in [0, 1]. N-gram precision clips candidate counts against the
//! pooled multiset of all input documents, so repeated summary n-grams
//! cannot over-claim. ROUGE is the plain token-level variant, no stemming or
//! stopword removal: numbers are comparable across runs of this toolkit, not
//! bit-comparable to other ROUGE packages.

use crate::corpus::DatasetRecord;
use crate::error::{Error, Result};
use crate::segment::segment_sentences;
use crate::tokenize::{tokenize, Token};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// A maximal shared token span between summary and source, found by the
/// greedy scan. Fragments never overlap in summary positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub summary_start: usize,
    pub source_start: usize,
    pub length: usize,
}

/// Greedy longest-match fragment extraction: at each summary position take
/// the longest common substring starting at any source position (smallest
/// source start on ties), emit it and jump past it, or advance one token.
pub fn extractive_fragments(summary: &[Token], source: &[Token]) -> Vec<Fragment> {
    let mut fragments = Vec::new();
    let mut i = 0;
    while i < summary.len() {
        let mut best_len = 0;
        let mut best_start = 0;
        for j in 0..source.len() {
            if source[j] != summary[i] {
                continue;
            }
            let mut len = 0;
            while i + len < summary.len()
                && j + len < source.len()
                && summary[i + len] == source[j + len]
            {
                len += 1;
            }
            if len > best_len {
                best_len = len;
                best_start = j;
            }
        }
        if best_len >= 1 {
            fragments.push(Fragment {
                summary_start: i,
                source_start: best_start,
                length: best_len,
            });
            i += best_len;
        } else {
            i += 1;
        }
    }
    fragments
}

/// Coverage, density, normalized density and compression for one
/// summary/source pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub coverage: f64,
    pub density: f64,
    pub normalized_density: f64,
    pub compression: f64,
}

pub fn coverage_density(
    fragments: &[Fragment],
    summary_len: usize,
    source_len: usize,
) -> Result<CoverageStats> {
    if summary_len == 0 {
        return Err(Error::EmptyInput {
            what: "coverage_density summary".into(),
        });
    }
    let s = summary_len as f64;
    let total: usize = fragments.iter().map(|f| f.length).sum();
    let squared: f64 = fragments.iter().map(|f| (f.length * f.length) as f64).sum();
    Ok(CoverageStats {
        coverage: total as f64 / s,
        density: squared / s,
        normalized_density: squared / (s * s),
        compression: source_len as f64 / s,
    })
}

fn ngram_counts(tokens: &[Token], n: usize) -> HashMap<&[Token], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram precision of the summary against the pooled n-gram
/// multiset of all source documents. N-grams never span document
/// boundaries. 1.0 means every summary n-gram maps to a distinct source
/// n-gram.
pub fn ngram_precision(summary: &[Token], source_docs: &[Vec<Token>], n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidConfig {
            field: "n".into(),
            reason: "n-gram order must be >= 1".into(),
        });
    }
    if summary.len() < n {
        return Err(Error::TooFewTokens {
            what: "ngram_precision summary".into(),
            needed: n,
            got: summary.len(),
        });
    }
    let mut pooled: HashMap<&[Token], usize> = HashMap::new();
    for doc in source_docs {
        for (gram, count) in ngram_counts(doc, n) {
            *pooled.entry(gram).or_insert(0) += count;
        }
    }
    let summary_counts = ngram_counts(summary, n);
    let mut clipped = 0usize;
    let mut total = 0usize;
    for (gram, count) in &summary_counts {
        total += count;
        clipped += (*count).min(pooled.get(gram).copied().unwrap_or(0));
    }
    Ok(clipped as f64 / total as f64)
}

/// Precision / recall / F1 triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f1,
        }
    }
}

/// Token-level ROUGE-N: clipped n-gram overlap over candidate and reference
/// n-gram counts.
pub fn rouge_n(candidate: &[Token], reference: &[Token], n: usize) -> Result<RougeScore> {
    if n < 1 {
        return Err(Error::InvalidConfig {
            field: "n".into(),
            reason: "n-gram order must be >= 1".into(),
        });
    }
    if candidate.len() < n || reference.len() < n {
        return Err(Error::TooFewTokens {
            what: format!("rouge_{n}"),
            needed: n,
            got: candidate.len().min(reference.len()),
        });
    }
    let cand = ngram_counts(candidate, n);
    let reference_counts = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(gram, count)| (*count).min(reference_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let cand_total = candidate.len() + 1 - n;
    let ref_total = reference.len() + 1 - n;
    Ok(RougeScore::from_pr(
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    ))
}

/// ROUGE-L from the longest common subsequence.
pub fn rouge_l(candidate: &[Token], reference: &[Token]) -> Result<RougeScore> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput {
            what: "rouge_l".into(),
        });
    }
    let lcs = lcs_length(candidate, reference);
    Ok(RougeScore::from_pr(
        lcs as f64 / candidate.len() as f64,
        lcs as f64 / reference.len() as f64,
    ))
}

fn lcs_length(a: &[Token], b: &[Token]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            curr[j] = if a[i - 1] == b[j - 1] {
                prev[j - 1] + 1
            } else {
                prev[j].max(curr[j - 1])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
        curr.fill(0);
    }
    prev[b.len()]
}

pub const HISTOGRAM_BINS: usize = 20;

/// Per-example points for the coverage/density and overlap plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePoint {
    pub example_id: String,
    pub coverage: f64,
    pub normalized_density: f64,
    pub unigram_precision: f64,
    pub bigram_precision: f64,
}

/// Corpus-level statistics over one dataset variant: size and split counts,
/// word/sentence averages for summaries, pooled inputs and per-input
/// documents, the input-document-count histogram, per-example
/// coverage/density points and 20-bin unigram/bigram precision histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub num_examples: usize,
    pub split_sizes: SplitSizes,
    pub summary_words_mean: f64,
    pub summary_sentences_mean: f64,
    pub input_words_mean: f64,
    pub input_sentences_mean: f64,
    pub per_doc_words_mean: f64,
    pub per_doc_sentences_mean: f64,
    pub compression_mean: f64,
    /// doc_count_histogram[d] = number of examples with d+1 input docs.
    pub doc_count_histogram: Vec<usize>,
    pub unigram_histogram: Vec<usize>,
    pub bigram_histogram: Vec<usize>,
    /// Fraction of examples whose bigram precision exceeds 0.9.
    pub bigram_over_09: f64,
    pub points: Vec<ExamplePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

fn histogram_bin(value: f64) -> usize {
    ((value * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Computes the statistics report over dataset records (word counts via the
/// metric tokenizer, sentence counts via segmentation of the stored text).
pub fn dataset_stats(records: &[DatasetRecord]) -> Result<StatsReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput {
            what: "dataset_stats".into(),
        });
    }
    let mut split_sizes = SplitSizes {
        train: 0,
        dev: 0,
        test: 0,
    };
    let mut summary_words = 0usize;
    let mut summary_sentences = 0usize;
    let mut input_words = 0usize;
    let mut input_sentences = 0usize;
    let mut doc_count = 0usize;
    let mut max_docs = 0usize;
    let mut doc_count_per_example: Vec<usize> = Vec::with_capacity(records.len());
    let mut compression_sum = 0.0;
    let mut unigram_histogram = vec![0usize; HISTOGRAM_BINS];
    let mut bigram_histogram = vec![0usize; HISTOGRAM_BINS];
    let mut bigram_over = 0usize;
    let mut points = Vec::with_capacity(records.len());

    for record in records {
        match record.split {
            crate::corpus::Split::Train => split_sizes.train += 1,
            crate::corpus::Split::Dev => split_sizes.dev += 1,
            crate::corpus::Split::Test => split_sizes.test += 1,
        }
        let summary_tokens = tokenize(&record.target);
        if summary_tokens.is_empty() {
            return Err(Error::EmptyInput {
                what: format!("dataset_stats target of {}", record.example_id),
            });
        }
        summary_words += summary_tokens.len();
        summary_sentences += segment_sentences(&record.target).0.len();

        let doc_tokens: Vec<Vec<Token>> = record
            .input_docs
            .iter()
            .map(|d| tokenize(&d.text))
            .collect();
        for d in &record.input_docs {
            input_sentences += segment_sentences(&d.text).0.len();
        }
        input_words += doc_tokens.iter().map(|t| t.len()).sum::<usize>();
        doc_count += record.input_docs.len();
        max_docs = max_docs.max(record.input_docs.len());
        doc_count_per_example.push(record.input_docs.len());

        let pooled: Vec<Token> = doc_tokens.iter().flatten().cloned().collect();
        let fragments = extractive_fragments(&summary_tokens, &pooled);
        let stats = coverage_density(&fragments, summary_tokens.len(), pooled.len())?;
        compression_sum += stats.compression;

        // Precision is undefined when the summary is shorter than the
        // n-gram; count such examples as zero overlap so histogram bins
        // still sum to the example count.
        let unigram = ngram_precision(&summary_tokens, &doc_tokens, 1)?;
        let bigram = if summary_tokens.len() >= 2 {
            ngram_precision(&summary_tokens, &doc_tokens, 2)?
        } else {
            0.0
        };
        unigram_histogram[histogram_bin(unigram)] += 1;
        bigram_histogram[histogram_bin(bigram)] += 1;
        if bigram > 0.9 {
            bigram_over += 1;
        }
        points.push(ExamplePoint {
            example_id: record.example_id.clone(),
            coverage: stats.coverage,
            normalized_density: stats.normalized_density,
            unigram_precision: unigram,
            bigram_precision: bigram,
        });
    }

    let n = records.len() as f64;
    let mut doc_count_histogram = vec![0usize; max_docs];
    for c in doc_count_per_example {
        doc_count_histogram[c - 1] += 1;
    }
    Ok(StatsReport {
        num_examples: records.len(),
        split_sizes,
        summary_words_mean: summary_words as f64 / n,
        summary_sentences_mean: summary_sentences as f64 / n,
        input_words_mean: input_words as f64 / n,
        input_sentences_mean: input_sentences as f64 / n,
        per_doc_words_mean: input_words as f64 / doc_count as f64,
        per_doc_sentences_mean: input_sentences as f64 / doc_count as f64,
        compression_mean: compression_sum / n,
        doc_count_histogram,
        unigram_histogram,
        bigram_histogram,
        bigram_over_09: bigram_over as f64 / n,
        points,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Writes the per-example CSVs that back the coverage/density and overlap
/// plots.
pub fn write_stats_csvs(report: &StatsReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cd_path = dir.join("coverage_density.csv");
    let mut cd = csv::Writer::from_path(&cd_path).map_err(|e| csv_error(&cd_path, e))?;
    cd.write_record(["example_id", "coverage", "normalized_density"])
        .map_err(|e| csv_error(&cd_path, e))?;
    for p in &report.points {
        cd.write_record([
            p.example_id.as_str(),
            &p.coverage.to_string(),
            &p.normalized_density.to_string(),
        ])
        .map_err(|e| csv_error(&cd_path, e))?;
    }
    cd.flush().map_err(|e| Error::io(&cd_path, e))?;

    let ov_path = dir.join("overlap.csv");
    let mut ov = csv::Writer::from_path(&ov_path).map_err(|e| csv_error(&ov_path, e))?;
    ov.write_record(["example_id", "unigram_p", "bigram_p"])
        .map_err(|e| csv_error(&ov_path, e))?;
    for p in &report.points {
        ov.write_record([
            p.example_id.as_str(),
            &p.unigram_precision.to_string(),
            &p.bigram_precision.to_string(),
        ])
        .map_err(|e| csv_error(&ov_path, e))?;
    }
    ov.flush().map_err(|e| Error::io(&ov_path, e))
}

/// Mean ROUGE over a system/reference pair of datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub num_examples: usize,
    pub rouge_1: RougeScore,
    pub rouge_2: RougeScore,
    pub rouge_l: RougeScore,
}

impl EvalReport {
    /// A small table with F1 scaled to percentages.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<24}{:>8}{:>8}{:>8}\n", "Method", "R-1", "R-2", "R-L"));
        out.push_str(&format!(
            "{:<24}{:>8.2}{:>8.2}{:>8.2}\n",
            self.method,
            self.rouge_1.f1 * 100.0,
            self.rouge_2.f1 * 100.0,
            self.rouge_l.f1 * 100.0
        ));
        out
    }
}

/// Scores system outputs against reference targets, joined on example_id.
/// Every system example must exist in the reference set.
pub fn evaluate_system(
    method: &str,
    system: &[DatasetRecord],
    reference: &[DatasetRecord],
) -> Result<EvalReport> {
    if system.is_empty() {
        return Err(Error::EmptyInput {
            what: "evaluate_system".into(),
        });
    }
    let by_id: HashMap<&str, &DatasetRecord> = reference
        .iter()
        .map(|r| (r.example_id.as_str(), r))
        .collect();
    let mut sums = [[0.0; 3]; 3];
    for record in system {
        let target = by_id
            .get(record.example_id.as_str())
            .ok_or_else(|| Error::UnknownExample {
                id: record.example_id.clone(),
            })?;
        let cand = tokenize(&record.target);
        let reference_tokens = tokenize(&target.target);
        let scores = [
            rouge_n(&cand, &reference_tokens, 1)?,
            rouge_n(&cand, &reference_tokens, 2)?,
            rouge_l(&cand, &reference_tokens)?,
        ];
        for (i, s) in scores.iter().enumerate() {
            sums[i][0] += s.precision;
            sums[i][1] += s.recall;
            sums[i][2] += s.f1;
        }
    }
    let n = system.len() as f64;
    let mean = |row: [f64; 3]| RougeScore {
        precision: row[0] / n,
        recall: row[1] / n,
        f1: row[2] / n,
    };
    Ok(EvalReport {
        method: method.to_string(),
        num_examples: system.len(),
        rouge_1: mean(sums[0]),
        rouge_2: mean(sums[1]),
        rouge_l: mean(sums[2]),
    })
}
