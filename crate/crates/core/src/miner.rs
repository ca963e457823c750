//! The qMDS mining algorithm.
//!
//! Every answer sentence is matched against the corpus inside the strict
//! similarity band `(theta_lower, theta_upper)`; the band keeps paraphrases
//! while dropping near-verbatim duplicates. Per-document match scores sum to
//! a relevance score `psi`, the top-K documents are kept, and an example is
//! emitted only when enough answer sentences found at least one match among
//! the kept documents. The extractive variant substitutes each answer
//! sentence into its best-matching document slot.

use crate::corpus::{
    DatasetRecord, Document, DocumentCorpus, InputDoc, QaExample, Sentence, Split, Variant,
};
use crate::embedding::{SentenceKey, VectorStore};
use crate::error::{Error, Result};
use crate::hash::fnv1a_64;
use crate::index::{Index, SearchMode};
use crate::tokenize::{join_tokens, tokenize};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Train/dev/test proportions. Positive, summing to 1 within 1e-9.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.825,
            dev: 0.08,
            test: 0.095,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        if self.train <= 0.0 || self.dev <= 0.0 || self.test <= 0.0 {
            return Err(Error::InvalidConfig {
                field: "split_fractions".into(),
                reason: "all fractions must be positive".into(),
            });
        }
        let sum = self.train + self.dev + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig {
                field: "split_fractions".into(),
                reason: format!("fractions sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Mining parameters. Defaults: band (0.8, 0.99), K = 7, recall gate 0.75,
/// splits 82.5 / 8.0 / 9.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    pub theta_lower: f64,
    pub theta_upper: f64,
    pub top_k: usize,
    pub min_summary_recall: f64,
    pub split_fractions: SplitFractions,
    /// Keep at most one document per url host before top-K truncation.
    pub dedup_url_host: bool,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            theta_lower: 0.8,
            theta_upper: 0.99,
            top_k: 7,
            min_summary_recall: 0.75,
            split_fractions: SplitFractions::default(),
            dedup_url_host: false,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_lower > 0.0 && self.theta_lower < self.theta_upper) {
            return Err(Error::InvalidConfig {
                field: "theta_lower".into(),
                reason: format!(
                    "need 0 < theta_lower < theta_upper, got {} and {}",
                    self.theta_lower, self.theta_upper
                ),
            });
        }
        if self.theta_upper > 1.0 {
            return Err(Error::InvalidConfig {
                field: "theta_upper".into(),
                reason: format!("must be <= 1, got {}", self.theta_upper),
            });
        }
        if self.top_k < 1 {
            return Err(Error::InvalidConfig {
                field: "top_k".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.min_summary_recall > 0.0 && self.min_summary_recall <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "min_summary_recall".into(),
                reason: format!("must be in (0, 1], got {}", self.min_summary_recall),
            });
        }
        self.split_fractions.validate()
    }
}

/// One in-band sentence match: answer sentence `answer_index` against corpus
/// sentence `(doc_id, sentence_index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceMatch {
    pub answer_index: usize,
    pub doc_id: String,
    pub sentence_index: usize,
    pub score: f64,
}

/// A document's relevance: the sum of all its in-band match scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub doc_id: String,
    pub psi: f64,
    pub matches: Vec<SentenceMatch>,
}

impl DocumentScore {
    /// Recomputes psi from the match list (invariant check for tests).
    pub fn recompute_psi(&self) -> f64 {
        self.matches.iter().map(|m| m.score).sum()
    }
}

/// An extractive substitution: document sentence `(doc_id, sentence_index)`
/// replaced by answer sentence `answer_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub doc_id: String,
    pub sentence_index: usize,
    pub answer_index: usize,
    pub score: f64,
}

/// One mined (query, target summary, input documents) triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmdsExample {
    pub example_id: String,
    pub query: String,
    pub target_sentences: Vec<Sentence>,
    pub input_docs: Vec<(Document, DocumentScore)>,
    pub summary_recall: f64,
    pub split: Split,
    pub variant: Variant,
    pub substitutions: Vec<Substitution>,
}

impl QmdsExample {
    pub fn target_text(&self) -> String {
        self.target_sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_record(&self) -> DatasetRecord {
        DatasetRecord {
            example_id: self.example_id.clone(),
            query: self.query.clone(),
            target: self.target_text(),
            variant: self.variant,
            split: self.split,
            summary_recall: self.summary_recall,
            input_docs: self
                .input_docs
                .iter()
                .map(|(doc, score)| InputDoc {
                    id: doc.id.clone(),
                    url: doc.url.clone(),
                    text: doc.normalized_text(),
                    score: score.psi,
                })
                .collect(),
        }
    }
}

/// Why an example was not emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowRecall,
    NoMatches,
}

/// Mining result for one QA example; rejection is an outcome, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum MineOutcome {
    Emitted(Box<QmdsExample>),
    Rejected {
        reason: RejectReason,
        recall: f64,
        num_docs: usize,
        psi: Vec<f64>,
    },
}

/// One mining-log line per QA example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningLogRecord {
    pub example_id: String,
    pub outcome: String,
    pub recall: f64,
    pub num_docs: usize,
    pub psi: Vec<f64>,
}

impl MiningLogRecord {
    pub fn from_outcome(example_id: &str, outcome: &MineOutcome) -> Self {
        match outcome {
            MineOutcome::Emitted(example) => MiningLogRecord {
                example_id: example_id.to_string(),
                outcome: "emitted".into(),
                recall: example.summary_recall,
                num_docs: example.input_docs.len(),
                psi: example.input_docs.iter().map(|(_, s)| s.psi).collect(),
            },
            MineOutcome::Rejected {
                reason,
                recall,
                num_docs,
                psi,
            } => MiningLogRecord {
                example_id: example_id.to_string(),
                outcome: match reason {
                    RejectReason::LowRecall => "low_recall".into(),
                    RejectReason::NoMatches => "no_matches".into(),
                },
                recall: *recall,
                num_docs: *num_docs,
                psi: psi.clone(),
            },
        }
    }
}

/// Matches one answer sentence against every corpus shard: range query at
/// `theta_lower`, then strict filtering into the open band. Shard results
/// merge by (score desc, key asc). Only corpus-document sentences are
/// indexed, so answer sentences are never returned.
pub fn match_answer_sentence(
    answer_sentence: &Sentence,
    answer_vectors: &VectorStore,
    shards: &[Index],
    config: &MinerConfig,
    mode: SearchMode,
) -> Result<Vec<SentenceMatch>> {
    let key = SentenceKey::for_sentence(answer_sentence);
    let vector = answer_vectors
        .get(&key)
        .ok_or_else(|| Error::MissingVector {
            key: key.to_string(),
        })?;
    let mut matches = Vec::new();
    for shard in shards {
        for (hit_key, score) in shard.query_threshold(vector, config.theta_lower, mode)? {
            if score > config.theta_lower && score < config.theta_upper {
                matches.push(SentenceMatch {
                    answer_index: answer_sentence.index,
                    doc_id: hit_key.id,
                    sentence_index: hit_key.index,
                    score,
                });
            }
        }
    }
    matches.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.doc_id.cmp(&b.doc_id))
            .then_with(|| a.sentence_index.cmp(&b.sentence_index))
    });
    Ok(matches)
}

/// Aggregates match sets into per-document scores: psi is the exact sum over
/// all of a document's in-band matches (every `(answer, sentence)` pair
/// counts). Sorted by psi descending, doc_id ascending on ties.
pub fn score_documents(match_sets: &[Vec<SentenceMatch>]) -> Vec<DocumentScore> {
    let mut grouped: BTreeMap<&str, Vec<&SentenceMatch>> = BTreeMap::new();
    for set in match_sets {
        for m in set {
            grouped.entry(&m.doc_id).or_default().push(m);
        }
    }
    let mut scores: Vec<DocumentScore> = grouped
        .into_iter()
        .map(|(doc_id, mut matches)| {
            matches.sort_by(|a, b| {
                a.answer_index
                    .cmp(&b.answer_index)
                    .then_with(|| a.sentence_index.cmp(&b.sentence_index))
            });
            let psi = matches.iter().map(|m| m.score).sum();
            DocumentScore {
                doc_id: doc_id.to_string(),
                psi,
                matches: matches.into_iter().cloned().collect(),
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.psi
            .partial_cmp(&a.psi)
            .unwrap()
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    scores
}

/// Fraction of answer sentences with at least one match among the selected
/// documents. A recall of 1.0 guarantees every target sentence is supported.
pub fn summary_recall(answer_count: usize, selected: &[DocumentScore]) -> f64 {
    let covered: BTreeSet<usize> = selected
        .iter()
        .flat_map(|d| d.matches.iter().map(|m| m.answer_index))
        .collect();
    covered.len() as f64 / answer_count as f64
}

fn url_host(url: &str) -> Option<&str> {
    let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
    let host = rest.split('/').next().unwrap_or("");
    if host.is_empty() {
        None
    } else {
        Some(host)
    }
}

/// Runs the full per-example pipeline: match every answer sentence, score
/// documents, truncate to top-K, gate on summary recall over the truncated
/// set, and assign the split.
pub fn mine_example(
    qa: &QaExample,
    corpus: &DocumentCorpus,
    answer_vectors: &VectorStore,
    shards: &[Index],
    config: &MinerConfig,
    mode: SearchMode,
) -> Result<MineOutcome> {
    let match_sets: Vec<Vec<SentenceMatch>> = qa
        .answer_sentences
        .iter()
        .map(|s| match_answer_sentence(s, answer_vectors, shards, config, mode))
        .collect::<Result<_>>()?;
    let mut scores = score_documents(&match_sets);
    if config.dedup_url_host {
        let mut seen_hosts = BTreeSet::new();
        scores.retain(|d| match corpus.get(&d.doc_id).and_then(|doc| url_host(&doc.url)) {
            Some(host) => seen_hosts.insert(host.to_string()),
            None => true,
        });
    }
    scores.truncate(config.top_k);

    if scores.is_empty() {
        return Ok(MineOutcome::Rejected {
            reason: RejectReason::NoMatches,
            recall: 0.0,
            num_docs: 0,
            psi: Vec::new(),
        });
    }
    let recall = summary_recall(qa.answer_sentences.len(), &scores);
    if recall < config.min_summary_recall {
        return Ok(MineOutcome::Rejected {
            reason: RejectReason::LowRecall,
            recall,
            num_docs: scores.len(),
            psi: scores.iter().map(|d| d.psi).collect(),
        });
    }

    let mut input_docs = Vec::with_capacity(scores.len());
    for score in scores {
        let doc = corpus
            .get(&score.doc_id)
            .ok_or_else(|| Error::MissingVector {
                key: format!("{}#<document>", score.doc_id),
            })?;
        input_docs.push((doc.clone(), score));
    }
    let split = assign_split(&qa.answer_sentences, &config.split_fractions);
    Ok(MineOutcome::Emitted(Box::new(QmdsExample {
        example_id: qa.example_id.clone(),
        query: qa.query.clone(),
        target_sentences: qa.answer_sentences.clone(),
        input_docs,
        summary_recall: recall,
        split,
        variant: Variant::Abstractive,
        substitutions: Vec::new(),
    })))
}

fn candidate_order(a: &SentenceMatch, b: &SentenceMatch) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap()
        .then_with(|| a.doc_id.cmp(&b.doc_id))
        .then_with(|| a.sentence_index.cmp(&b.sentence_index))
}

/// Derives the conjugate extractive example. Every answer sentence proposes
/// its highest-scoring matching slot (ties: lowest doc_id, then lowest
/// sentence index); when several answer sentences propose the same slot the
/// highest-scoring one wins (ties: lowest answer index) and the losers fall
/// back to their next-best unconsumed slot, round after round until nothing
/// moves. Each slot is substituted at most once; an answer sentence with no
/// remaining slot simply yields no substitution. Everything else is
/// byte-identical to the abstractive variant.
pub fn make_extractive(example: &QmdsExample) -> Result<QmdsExample> {
    if example.variant != Variant::Abstractive {
        return Err(Error::MixedVariants {
            expected: Variant::Abstractive.to_string(),
            found: example.variant.to_string(),
        });
    }
    let candidates: Vec<&SentenceMatch> = example
        .input_docs
        .iter()
        .flat_map(|(_, score)| score.matches.iter())
        .collect();

    let mut unassigned: BTreeSet<usize> = candidates.iter().map(|m| m.answer_index).collect();
    let mut consumed: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut substitutions: Vec<Substitution> = Vec::new();
    loop {
        // Simultaneous proposals: each open answer picks its best free slot.
        let mut proposals: BTreeMap<(String, usize), Vec<&SentenceMatch>> = BTreeMap::new();
        let mut exhausted: Vec<usize> = Vec::new();
        for &k in &unassigned {
            let best = candidates
                .iter()
                .filter(|m| m.answer_index == k)
                .filter(|m| !consumed.contains(&(m.doc_id.clone(), m.sentence_index)))
                .min_by(|a, b| candidate_order(a, b))
                .copied();
            match best {
                Some(m) => proposals
                    .entry((m.doc_id.clone(), m.sentence_index))
                    .or_default()
                    .push(m),
                None => exhausted.push(k),
            }
        }
        for k in exhausted {
            unassigned.remove(&k);
        }
        if proposals.is_empty() {
            break;
        }
        for (slot, mut contenders) in proposals {
            contenders.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap()
                    .then_with(|| a.answer_index.cmp(&b.answer_index))
            });
            let winner = contenders[0];
            consumed.insert(slot);
            unassigned.remove(&winner.answer_index);
            substitutions.push(Substitution {
                doc_id: winner.doc_id.clone(),
                sentence_index: winner.sentence_index,
                answer_index: winner.answer_index,
                score: winner.score,
            });
        }
    }
    substitutions.sort_by(|a, b| a.answer_index.cmp(&b.answer_index));

    let mut result = example.clone();
    result.variant = Variant::Extractive;
    for sub in &substitutions {
        let target_text = example.target_sentences[sub.answer_index].text.clone();
        let (doc, _) = result
            .input_docs
            .iter_mut()
            .find(|(doc, _)| doc.id == sub.doc_id)
            .expect("substitution references a selected document");
        doc.sentences[sub.sentence_index].text = target_text;
    }
    result.substitutions = substitutions;
    Ok(result)
}

/// Deterministic split assignment: 64-bit FNV-1a over the tokenized,
/// space-joined long answer (query excluded, so identical answers always
/// share a split), mapped to [0, 1) and cut at the fraction boundaries.
pub fn assign_split(answer_sentences: &[Sentence], fractions: &SplitFractions) -> Split {
    let mut tokens = Vec::new();
    for sentence in answer_sentences {
        tokens.extend(tokenize(&sentence.text));
    }
    let normalized = join_tokens(&tokens);
    let h = fnv1a_64(normalized.as_bytes());
    let u = h as f64 / 18446744073709551616.0;
    if u < fractions.train {
        Split::Train
    } else if u < fractions.train + fractions.dev {
        Split::Dev
    } else {
        Split::Test
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{BaselineEmbedder, SentenceEncoder};
    use crate::index::build_index;

    fn sentence(text: &str, doc_id: &str, index: usize) -> Sentence {
        Sentence {
            text: text.to_string(),
            doc_id: doc_id.to_string(),
            index,
        }
    }

    fn m(answer: usize, doc: &str, idx: usize, score: f64) -> SentenceMatch {
        SentenceMatch {
            answer_index: answer,
            doc_id: doc.to_string(),
            sentence_index: idx,
            score,
        }
    }

    #[test]
    fn default_config_matches_documented_parameters() {
        let config = MinerConfig::default();
        assert_eq!(config.theta_lower, 0.8);
        assert_eq!(config.theta_upper, 0.99);
        assert_eq!(config.top_k, 7);
        assert_eq!(config.min_summary_recall, 0.75);
        assert_eq!(config.split_fractions.train, 0.825);
        assert_eq!(config.split_fractions.dev, 0.08);
        assert_eq!(config.split_fractions.test, 0.095);
        assert!(!config.dedup_url_host);
        config.validate().unwrap();
    }

    #[test]
    fn config_validation_rejects_bad_bands() {
        let mut config = MinerConfig::default();
        config.theta_lower = 0.99;
        config.theta_upper = 0.8;
        assert!(config.validate().is_err());
        let mut config = MinerConfig::default();
        config.split_fractions.test = 0.2;
        assert!(config.validate().is_err());
        let mut config = MinerConfig::default();
        config.top_k = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn score_documents_sums_and_ranks() {
        let sets = vec![
            vec![m(0, "a", 0, 0.85), m(0, "b", 2, 0.95)],
            vec![m(1, "a", 3, 0.90)],
        ];
        let scores = score_documents(&sets);
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].doc_id, "a");
        assert!((scores[0].psi - 1.75).abs() < 1e-12);
        assert_eq!(scores[1].doc_id, "b");
        assert!((scores[1].psi - 0.95).abs() < 1e-12);
        for s in &scores {
            assert!((s.psi - s.recompute_psi()).abs() <= 1e-9);
        }
    }

    #[test]
    fn score_documents_empty_and_ties() {
        assert!(score_documents(&[vec![], vec![]]).is_empty());
        let sets = vec![vec![m(0, "zz", 0, 1.70), m(1, "aa", 0, 0.90), m(2, "aa", 1, 0.80)]];
        let scores = score_documents(&sets);
        assert!((scores[0].psi - scores[1].psi).abs() < 1e-12);
        assert_eq!(scores[0].doc_id, "aa");
        assert_eq!(scores[1].doc_id, "zz");
    }

    #[test]
    fn summary_recall_arithmetic() {
        let selected = vec![DocumentScore {
            doc_id: "a".into(),
            psi: 2.55,
            matches: vec![m(0, "a", 0, 0.85), m(1, "a", 1, 0.85), m(2, "a", 2, 0.85)],
        }];
        assert!((summary_recall(4, &selected) - 0.75).abs() < 1e-12);
        assert_eq!(summary_recall(3, &selected), 1.0);
        assert_eq!(summary_recall(4, &[]), 0.0);
    }

    /// Corpus helpers: documents are one sentence per "paragraph" so
    /// sentence indices are stable and obvious.
    struct MiniWorld {
        corpus: DocumentCorpus,
        corpus_vectors: VectorStore,
        answer_vectors: VectorStore,
        index: Index,
    }

    fn build_world(docs: &[(&str, Vec<&str>)], answers: &[(&str, Vec<&str>)], dim: usize) -> MiniWorld {
        let embedder = BaselineEmbedder::new(dim).unwrap();
        let mut corpus = DocumentCorpus::new();
        let mut corpus_vectors = VectorStore::new(dim);
        for (id, sentences) in docs {
            let text = sentences.join("\n\n");
            let doc = Document::from_text(id, "", &text).unwrap();
            for s in &doc.sentences {
                corpus_vectors
                    .insert(SentenceKey::for_sentence(s), embedder.encode(s).unwrap())
                    .unwrap();
            }
            corpus.push(doc).unwrap();
        }
        let mut answer_vectors = VectorStore::new(dim);
        for (id, sentences) in answers {
            for (k, text) in sentences.iter().enumerate() {
                let s = sentence(text, id, k);
                answer_vectors
                    .insert(SentenceKey::for_sentence(&s), embedder.encode(&s).unwrap())
                    .unwrap();
            }
        }
        let index = build_index(&corpus_vectors, 64, 0.0, 0).unwrap();
        MiniWorld {
            corpus,
            corpus_vectors,
            answer_vectors,
            index,
        }
    }

    fn words(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:02}")).collect()
    }

    /// A sentence sharing its first `shared` tokens with `base`, padded back
    /// to the same length with tokens from `junk_prefix`. With unigram+bigram
    /// hashing and no collisions the dot against `base` is
    /// (2*shared - 1) / (2*len - 1).
    fn paraphrase(base: &[String], shared: usize, junk_prefix: &str) -> String {
        let mut tokens: Vec<String> = base[..shared].to_vec();
        tokens.extend(words(junk_prefix, base.len() - shared));
        tokens.join(" ")
    }

    #[test]
    fn band_filter_keeps_midband_and_drops_extremes() {
        let base = words("w", 20);
        let answer_text = base.join(" ");
        // shared 19 -> ~0.95, shared 17 -> ~0.85, shared 16 -> ~0.79 (out),
        // exact copy -> 1.0 (excluded by the upper bound).
        let docs = vec![
            ("d1", vec![paraphrase(&base, 19, "xa")]),
            ("d2", vec![paraphrase(&base, 17, "xb")]),
            ("d3", vec![paraphrase(&base, 16, "xc")]),
            ("d4", vec![answer_text.clone()]),
        ];
        let docs_ref: Vec<(&str, Vec<&str>)> = docs
            .iter()
            .map(|(id, s)| (*id, s.iter().map(|x| x.as_str()).collect()))
            .collect();
        let world = build_world(&docs_ref, &[("q1", vec![answer_text.as_str()])], 4096);

        // Verify the planted similarities with the brute-force oracle before
        // asserting band membership.
        let answer_key = SentenceKey::new("q1", 0);
        let answer_vec = world.answer_vectors.get(&answer_key).unwrap();
        let oracle = crate::index::brute_force_query(&world.corpus_vectors, answer_vec, 0.1).unwrap();
        let score_of = |id: &str| {
            oracle
                .iter()
                .find(|(k, _)| k.id == id)
                .map(|(_, s)| *s)
                .unwrap()
        };
        assert!((score_of("d1") - 0.95).abs() < 0.03, "d1 {}", score_of("d1"));
        assert!((score_of("d2") - 0.85).abs() < 0.03, "d2 {}", score_of("d2"));
        assert!(score_of("d3") < 0.8, "d3 {}", score_of("d3"));
        assert!(score_of("d3") > 0.7, "d3 {}", score_of("d3"));
        assert!(score_of("d4") > 0.99, "d4 {}", score_of("d4"));

        let config = MinerConfig::default();
        let answer = sentence(&answer_text, "q1", 0);
        let matches = match_answer_sentence(
            &answer,
            &world.answer_vectors,
            std::slice::from_ref(&world.index),
            &config,
            SearchMode::Exact,
        )
        .unwrap();
        let ids: Vec<&str> = matches.iter().map(|m| m.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["d1", "d2"], "scores: {matches:?}");
        assert!(matches.iter().all(|m| m.score > 0.8 && m.score < 0.99));
    }

    #[test]
    fn missing_answer_vector_names_key() {
        let world = build_world(&[("d1", vec!["Some corpus sentence here."])], &[], 512);
        let config = MinerConfig::default();
        let answer = sentence("unembedded answer", "q9", 3);
        let err = match_answer_sentence(
            &answer,
            &world.answer_vectors,
            std::slice::from_ref(&world.index),
            &config,
            SearchMode::Exact,
        )
        .unwrap_err();
        match err {
            Error::MissingVector { key } => assert_eq!(key, "q9#3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mine_example_gates_on_recall() {
        let a = words("a", 20);
        let b = words("b", 20);
        let c = words("c", 20);
        let d = words("d", 20);
        let answer_texts = vec![a.join(" "), b.join(" "), c.join(" "), d.join(" ")];
        // Only the first two answer sentences have in-band paraphrases:
        // recall 0.5 < 0.75.
        let docs = vec![
            ("d1", vec![paraphrase(&a, 18, "ja")]),
            ("d2", vec![paraphrase(&b, 18, "jb")]),
            ("d3", vec![words("zz", 20).join(" ")]),
        ];
        let docs_ref: Vec<(&str, Vec<&str>)> = docs
            .iter()
            .map(|(id, s)| (*id, s.iter().map(|x| x.as_str()).collect()))
            .collect();
        let answers_ref: Vec<(&str, Vec<&str>)> = vec![(
            "q1",
            answer_texts.iter().map(|x| x.as_str()).collect(),
        )];
        let world = build_world(&docs_ref, &answers_ref, 4096);
        let qa = QaExample {
            example_id: "q1".into(),
            query: "query".into(),
            answer_sentences: answer_texts
                .iter()
                .enumerate()
                .map(|(k, t)| sentence(t, "q1", k))
                .collect(),
        };
        let config = MinerConfig::default();
        let outcome = mine_example(
            &qa,
            &world.corpus,
            &world.answer_vectors,
            std::slice::from_ref(&world.index),
            &config,
            SearchMode::Exact,
        )
        .unwrap();
        match outcome {
            MineOutcome::Rejected {
                reason,
                recall,
                num_docs,
                ..
            } => {
                assert_eq!(reason, RejectReason::LowRecall);
                assert!((recall - 0.5).abs() < 1e-12);
                assert_eq!(num_docs, 2);
            }
            other => panic!("expected rejection, got {other:?}"),
        }

        // With the gate lowered the same example is emitted with 2 docs
        // (fewer than K), exercising the sub-K path.
        let mut relaxed = config.clone();
        relaxed.min_summary_recall = 0.5;
        let outcome = mine_example(
            &qa,
            &world.corpus,
            &world.answer_vectors,
            std::slice::from_ref(&world.index),
            &relaxed,
            SearchMode::Exact,
        )
        .unwrap();
        match outcome {
            MineOutcome::Emitted(example) => {
                assert_eq!(example.input_docs.len(), 2);
                assert!((example.summary_recall - 0.5).abs() < 1e-12);
                assert!(example.input_docs.windows(2).all(|w| w[0].1.psi >= w[1].1.psi));
            }
            other => panic!("expected emission, got {other:?}"),
        }
    }

    #[test]
    fn mine_example_no_matches() {
        let a = words("a", 20);
        let world = build_world(
            &[("d1", vec!["completely unrelated filler text here."])],
            &[("q1", vec![a.join(" ").as_str()])],
            512,
        );
        let qa = QaExample {
            example_id: "q1".into(),
            query: "query".into(),
            answer_sentences: vec![sentence(&a.join(" "), "q1", 0)],
        };
        let outcome = mine_example(
            &qa,
            &world.corpus,
            &world.answer_vectors,
            std::slice::from_ref(&world.index),
            &MinerConfig::default(),
            SearchMode::Exact,
        )
        .unwrap();
        assert!(matches!(
            outcome,
            MineOutcome::Rejected {
                reason: RejectReason::NoMatches,
                num_docs: 0,
                ..
            }
        ));
    }

    fn example_with_matches(matches_by_doc: Vec<(&str, Vec<SentenceMatch>)>) -> QmdsExample {
        let targets = vec![
            sentence("Target zero.", "q1", 0),
            sentence("Target one.", "q1", 1),
            sentence("Target two.", "q1", 2),
        ];
        let input_docs = matches_by_doc
            .into_iter()
            .map(|(doc_id, matches)| {
                let n_sentences = matches
                    .iter()
                    .map(|m| m.sentence_index + 1)
                    .max()
                    .unwrap_or(1)
                    .max(6);
                let text = (0..n_sentences)
                    .map(|i| format!("Doc {doc_id} sentence {i}."))
                    .collect::<Vec<_>>()
                    .join(" ");
                let doc = Document::from_text(doc_id, "", &text).unwrap();
                let psi = matches.iter().map(|m| m.score).sum();
                (
                    doc,
                    DocumentScore {
                        doc_id: doc_id.to_string(),
                        psi,
                        matches,
                    },
                )
            })
            .collect();
        QmdsExample {
            example_id: "q1".into(),
            query: "query".into(),
            target_sentences: targets,
            input_docs,
            summary_recall: 1.0,
            split: Split::Train,
            variant: Variant::Abstractive,
            substitutions: Vec::new(),
        }
    }

    #[test]
    fn extractive_single_candidate_substitutes_verbatim() {
        let example = example_with_matches(vec![("A", vec![m(1, "A", 3, 0.9)])]);
        let extractive = make_extractive(&example).unwrap();
        assert_eq!(extractive.substitutions.len(), 1);
        let sub = &extractive.substitutions[0];
        assert_eq!((sub.doc_id.as_str(), sub.sentence_index, sub.answer_index), ("A", 3, 1));
        let doc = &extractive.input_docs[0].0;
        assert_eq!(doc.sentences[3].text, "Target one.");
        // Untouched sentences are byte-identical.
        for (i, s) in doc.sentences.iter().enumerate() {
            if i != 3 {
                assert_eq!(s.text, example.input_docs[0].0.sentences[i].text);
            }
        }
    }

    #[test]
    fn extractive_conflict_resolved_by_score() {
        // Answer 0 wants (A,0) at 0.95 and (B,4) at 0.90; answer 1 only has
        // (A,0) at 0.93. Answer 0 wins (A,0); answer 1 gets nothing.
        let example = example_with_matches(vec![
            ("A", vec![m(0, "A", 0, 0.95), m(1, "A", 0, 0.93)]),
            ("B", vec![m(0, "B", 4, 0.90)]),
        ]);
        let extractive = make_extractive(&example).unwrap();
        assert_eq!(extractive.substitutions.len(), 1);
        let sub = &extractive.substitutions[0];
        assert_eq!((sub.doc_id.as_str(), sub.sentence_index, sub.answer_index), ("A", 0, 0));

        // Give answer 1 a fallback; now both substitute.
        let example = example_with_matches(vec![
            ("A", vec![m(0, "A", 0, 0.95), m(1, "A", 0, 0.93), m(1, "A", 2, 0.85)]),
            ("B", vec![m(0, "B", 4, 0.90)]),
        ]);
        let extractive = make_extractive(&example).unwrap();
        assert_eq!(extractive.substitutions.len(), 2);
        assert_eq!(extractive.substitutions[0].answer_index, 0);
        assert_eq!(extractive.substitutions[0].sentence_index, 0);
        assert_eq!(extractive.substitutions[1].answer_index, 1);
        assert_eq!(extractive.substitutions[1].sentence_index, 2);
    }

    #[test]
    fn extractive_conjugate_shares_everything_else() {
        let example = example_with_matches(vec![
            ("A", vec![m(0, "A", 0, 0.95)]),
            ("B", vec![m(1, "B", 1, 0.85)]),
        ]);
        let extractive = make_extractive(&example).unwrap();
        assert_eq!(extractive.example_id, example.example_id);
        assert_eq!(extractive.query, example.query);
        assert_eq!(extractive.target_sentences, example.target_sentences);
        assert_eq!(extractive.summary_recall, example.summary_recall);
        assert_eq!(extractive.split, example.split);
        let abs_ids: Vec<_> = example.input_docs.iter().map(|(d, s)| (&d.id, s.psi)).collect();
        let ext_ids: Vec<_> = extractive.input_docs.iter().map(|(d, s)| (&d.id, s.psi)).collect();
        assert_eq!(abs_ids, ext_ids);
        assert!(make_extractive(&extractive).is_err());
    }

    /// Independent re-implementation of the propose-and-resolve substitution
    /// rounds, organized as precomputed preference lists with cursors
    /// (Gale-Shapley style) instead of repeated scans.
    fn assignment_oracle(matches: &[SentenceMatch]) -> Vec<(usize, String, usize)> {
        let answers: BTreeSet<usize> = matches.iter().map(|mm| mm.answer_index).collect();
        let mut preferences: BTreeMap<usize, Vec<&SentenceMatch>> = BTreeMap::new();
        for &k in &answers {
            let mut prefs: Vec<&SentenceMatch> =
                matches.iter().filter(|mm| mm.answer_index == k).collect();
            prefs.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap()
                    .then_with(|| a.doc_id.cmp(&b.doc_id))
                    .then_with(|| a.sentence_index.cmp(&b.sentence_index))
            });
            preferences.insert(k, prefs);
        }
        let mut cursor: BTreeMap<usize, usize> = answers.iter().map(|&k| (k, 0)).collect();
        let mut taken: BTreeSet<(String, usize)> = BTreeSet::new();
        let mut open: BTreeSet<usize> = answers.clone();
        let mut result = Vec::new();
        while !open.is_empty() {
            // Advance each open answer's cursor past consumed slots; the
            // slot under the cursor is its proposal this round.
            let mut round: BTreeMap<(String, usize), Vec<&SentenceMatch>> = BTreeMap::new();
            let mut done: Vec<usize> = Vec::new();
            for &k in &open {
                let prefs = &preferences[&k];
                let mut c = cursor[&k];
                while c < prefs.len()
                    && taken.contains(&(prefs[c].doc_id.clone(), prefs[c].sentence_index))
                {
                    c += 1;
                }
                cursor.insert(k, c);
                match prefs.get(c) {
                    Some(p) => round
                        .entry((p.doc_id.clone(), p.sentence_index))
                        .or_default()
                        .push(p),
                    None => done.push(k),
                }
            }
            for k in done {
                open.remove(&k);
            }
            if round.is_empty() {
                break;
            }
            for (slot, mut contenders) in round {
                contenders.sort_by(|a, b| {
                    b.score
                        .partial_cmp(&a.score)
                        .unwrap()
                        .then_with(|| a.answer_index.cmp(&b.answer_index))
                });
                let winner = contenders[0];
                taken.insert(slot.clone());
                open.remove(&winner.answer_index);
                result.push((winner.answer_index, slot.0, slot.1));
            }
        }
        result.sort();
        result
    }

    #[test]
    fn assignment_matches_independent_round_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n_matches = rng.random_range(1..=6);
            let matches: Vec<SentenceMatch> = (0..n_matches)
                .map(|_| {
                    m(
                        rng.random_range(0..3),
                        ["A", "B"][rng.random_range(0..2)],
                        rng.random_range(0..3),
                        // Score grid keeps deliberate ties plausible.
                        0.80 + 0.01 * rng.random_range(0..15) as f64,
                    )
                })
                .collect();
            let mut by_doc: BTreeMap<&str, Vec<SentenceMatch>> = BTreeMap::new();
            for mm in &matches {
                by_doc.entry(match mm.doc_id.as_str() {
                    "A" => "A",
                    _ => "B",
                })
                .or_default()
                .push(mm.clone());
            }
            // Dedup identical (answer, slot) pairs the generator may emit;
            // the miner never produces duplicates.
            let mut by_doc: Vec<(&str, Vec<SentenceMatch>)> = by_doc.into_iter().collect();
            let mut all: Vec<SentenceMatch> = Vec::new();
            for (_, list) in &mut by_doc {
                list.sort_by(|a, b| {
                    a.answer_index
                        .cmp(&b.answer_index)
                        .then_with(|| a.sentence_index.cmp(&b.sentence_index))
                        .then_with(|| a.score.partial_cmp(&b.score).unwrap())
                });
                list.dedup_by(|a, b| {
                    a.answer_index == b.answer_index && a.sentence_index == b.sentence_index
                });
                all.extend(list.iter().cloned());
            }
            let example = example_with_matches(by_doc);
            let extractive = make_extractive(&example).unwrap();
            let mut got: Vec<(usize, String, usize)> = extractive
                .substitutions
                .iter()
                .map(|s| (s.answer_index, s.doc_id.clone(), s.sentence_index))
                .collect();
            got.sort();
            let expected = assignment_oracle(&all);
            assert_eq!(got, expected, "matches: {all:?}");

            // Fixed-point sanity: slots and answers are injective, and any
            // unassigned answer has all of its slots consumed.
            let slots: BTreeSet<_> = got.iter().map(|(_, d, j)| (d.clone(), *j)).collect();
            assert_eq!(slots.len(), got.len());
            let assigned: BTreeSet<usize> = got.iter().map(|(k, _, _)| *k).collect();
            for mm in &all {
                if !assigned.contains(&mm.answer_index) {
                    assert!(
                        slots.contains(&(mm.doc_id.clone(), mm.sentence_index)),
                        "unassigned answer {} still had a free slot",
                        mm.answer_index
                    );
                }
            }
        }
    }

    #[test]
    fn split_assignment_ignores_query_and_is_deterministic() {
        let fractions = SplitFractions::default();
        let answer = vec![
            sentence("Plants drip water through guttation.", "q1", 0),
            sentence("Root pressure pushes water upward.", "q1", 1),
        ];
        let again = vec![
            sentence("Plants drip   water through guttation.", "q2", 0),
            sentence("Root pressure pushes water upward!", "q2", 1),
        ];
        let a = assign_split(&answer, &fractions);
        let b = assign_split(&answer, &fractions);
        assert_eq!(a, b);
        // Tokenization normalizes whitespace and punctuation, and the hash
        // ignores ids and queries entirely.
        assert_eq!(assign_split(&again, &fractions), a);
    }
}
