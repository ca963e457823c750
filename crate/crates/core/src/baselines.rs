//! Reference extractive baseline (TextRank) and the query paragraph
//! pre-filter that turns a query-agnostic summarizer into a query-based one.

use crate::corpus::{Document, Sentence};
use crate::error::{Error, Result};
use crate::metrics::ngram_precision;
use crate::tokenize::{tokenize, Token};
use std::collections::BTreeSet;

/// Weighted sentence graph over all sentences pooled from the input
/// documents. Edge weight is shared token types over summed log token
/// counts; sentences with fewer than two tokens use log(count + 1) so the
/// denominator never vanishes on degenerate input.
#[derive(Debug, Clone)]
pub struct SentenceGraph {
    pub nodes: Vec<Sentence>,
    pub weights: Vec<Vec<f64>>,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

fn log_term(token_count: usize) -> f64 {
    if token_count < 2 {
        ((token_count + 1) as f64).ln()
    } else {
        (token_count as f64).ln()
    }
}

impl SentenceGraph {
    pub fn build(docs: &[Document]) -> Result<SentenceGraph> {
        let nodes: Vec<Sentence> = docs.iter().flat_map(|d| d.sentences.clone()).collect();
        if nodes.is_empty() {
            return Err(Error::EmptyInput {
                what: "textrank sentence graph".into(),
            });
        }
        let tokens: Vec<Vec<Token>> = nodes.iter().map(|s| tokenize(&s.text)).collect();
        let types: Vec<BTreeSet<&Token>> = tokens.iter().map(|t| t.iter().collect()).collect();
        let n = nodes.len();
        let mut weights = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let shared = types[i].intersection(&types[j]).count();
                if shared == 0 {
                    continue;
                }
                let denom = log_term(tokens[i].len()) + log_term(tokens[j].len());
                if denom > 0.0 {
                    let w = shared as f64 / denom;
                    weights[i][j] = w;
                    weights[j][i] = w;
                }
            }
        }
        Ok(SentenceGraph {
            nodes,
            weights,
            damping: 0.85,
            tolerance: 1e-6,
            max_iterations: 100,
        })
    }

    /// Weighted PageRank. Returns the rank vector, the iteration count and
    /// whether the residual dropped below tolerance.
    pub fn rank(&self) -> (Vec<f64>, usize, bool) {
        let n = self.nodes.len();
        let out_sum: Vec<f64> = (0..n).map(|j| self.weights[j].iter().sum()).collect();
        let mut ranks = vec![1.0; n];
        for iteration in 1..=self.max_iterations {
            let mut next = vec![1.0 - self.damping; n];
            for j in 0..n {
                if out_sum[j] <= 0.0 {
                    continue;
                }
                let share = self.damping * ranks[j] / out_sum[j];
                for i in 0..n {
                    if self.weights[j][i] > 0.0 {
                        next[i] += share * self.weights[j][i];
                    }
                }
            }
            let residual = ranks
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            ranks = next;
            if residual < self.tolerance {
                return (ranks, iteration, true);
            }
        }
        (ranks, self.max_iterations, false)
    }
}

/// TextRank output: selected sentences in (doc_id, index) order.
#[derive(Debug, Clone)]
pub struct TextRankSummary {
    pub sentences: Vec<Sentence>,
    /// Set when fewer sentences were available than requested.
    pub fewer_than_requested: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl TextRankSummary {
    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Ranks all pooled sentences and keeps the top `num_sentences` (ties: doc_id
/// then index ascending), re-ordered by position for readability. Purely
/// extractive: every output sentence is an input sentence.
pub fn textrank_summarize(docs: &[Document], num_sentences: usize) -> Result<TextRankSummary> {
    if num_sentences < 1 {
        return Err(Error::InvalidConfig {
            field: "num_sentences".into(),
            reason: "must be >= 1".into(),
        });
    }
    let graph = SentenceGraph::build(docs)?;
    let (ranks, iterations, converged) = graph.rank();
    let mut order: Vec<usize> = (0..graph.nodes.len()).collect();
    order.sort_by(|&a, &b| {
        ranks[b]
            .partial_cmp(&ranks[a])
            .unwrap()
            .then_with(|| graph.nodes[a].doc_id.cmp(&graph.nodes[b].doc_id))
            .then_with(|| graph.nodes[a].index.cmp(&graph.nodes[b].index))
    });
    let take = num_sentences.min(order.len());
    let mut selected: Vec<Sentence> = order[..take]
        .iter()
        .map(|&i| graph.nodes[i].clone())
        .collect();
    selected.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then_with(|| a.index.cmp(&b.index)));
    Ok(TextRankSummary {
        sentences: selected,
        fewer_than_requested: take < num_sentences,
        iterations,
        converged,
    })
}

/// Scores every paragraph by clipped unigram precision of the query tokens
/// against the paragraph tokens, keeps the top `max_paragraphs` (ties:
/// doc_id then paragraph position), and reassembles the surviving paragraphs
/// into their documents. Text is never edited; documents left with no
/// paragraphs are dropped.
pub fn query_filter(
    query: &str,
    docs: &[Document],
    max_paragraphs: usize,
) -> Result<Vec<Document>> {
    let query_tokens = tokenize(query);
    if query_tokens.is_empty() {
        return Err(Error::EmptyInput {
            what: "query_filter query".into(),
        });
    }
    if max_paragraphs < 1 {
        return Err(Error::InvalidConfig {
            field: "max_paragraphs".into(),
            reason: "must be >= 1".into(),
        });
    }
    struct Para<'a> {
        doc_pos: usize,
        doc_id: &'a str,
        para_index: usize,
        score: f64,
    }
    let mut paragraphs: Vec<Para> = Vec::new();
    for (doc_pos, doc) in docs.iter().enumerate() {
        for (para_index, sentences) in doc.paragraphs().into_iter().enumerate() {
            let para_tokens: Vec<Token> = sentences
                .iter()
                .flat_map(|s| tokenize(&s.text))
                .collect();
            let score = ngram_precision(&query_tokens, &[para_tokens], 1)?;
            paragraphs.push(Para {
                doc_pos,
                doc_id: &doc.id,
                para_index,
                score,
            });
        }
    }
    paragraphs.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.doc_id.cmp(b.doc_id))
            .then_with(|| a.para_index.cmp(&b.para_index))
    });
    paragraphs.truncate(max_paragraphs);

    let mut kept: BTreeSet<(usize, usize)> = BTreeSet::new();
    for p in &paragraphs {
        kept.insert((p.doc_pos, p.para_index));
    }
    let mut out = Vec::new();
    for (doc_pos, doc) in docs.iter().enumerate() {
        let mut sentences: Vec<Sentence> = Vec::new();
        let mut breaks: Vec<usize> = Vec::new();
        for (para_index, para) in doc.paragraphs().into_iter().enumerate() {
            if !kept.contains(&(doc_pos, para_index)) {
                continue;
            }
            breaks.push(sentences.len());
            for s in para {
                sentences.push(Sentence {
                    text: s.text.clone(),
                    doc_id: doc.id.clone(),
                    index: sentences.len(),
                });
            }
        }
        if !sentences.is_empty() {
            out.push(Document {
                id: doc.id.clone(),
                url: doc.url.clone(),
                sentences,
                paragraph_breaks: breaks,
            });
        }
    }
    Ok(out)
}
