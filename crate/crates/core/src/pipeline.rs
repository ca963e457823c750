//! Stage orchestration: ingest -> embed -> index -> mine -> extractive ->
//! stats / baseline / eval.
//!
//! Stages communicate only through files under the work directory, every
//! stage writes a manifest (config hash plus input/output digests), and all
//! randomness flows from the single config seed, so a run is reproducible
//! from config and inputs alone regardless of thread or shard count.

use crate::baselines::{query_filter, textrank_summarize};
use crate::config::{EmbedderChoice, PipelineConfig};
use crate::corpus::{
    self, DatasetRecord, DocumentCorpus, QaExample, Variant,
};
use crate::embedding::{
    load_vectors, save_vectors, BaselineEmbedder, SentenceEncoder, SentenceKey, VectorStore,
};
use crate::error::{Error, Result};
use crate::hash::fnv1a_64;
use crate::index::{build_index, load_index, save_index, Index, SearchMode};
use crate::metrics::{dataset_stats, evaluate_system, write_stats_csvs, EvalReport, StatsReport};
use crate::miner::{make_extractive, mine_example, MineOutcome, MiningLogRecord, QmdsExample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// All well-known artifact locations under the work directory.
#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: &Path) -> Self {
        Workdir {
            root: root.to_path_buf(),
        }
    }

    pub fn normalized_documents(&self) -> PathBuf {
        self.root.join("normalized/documents.jsonl")
    }
    pub fn normalized_qa(&self) -> PathBuf {
        self.root.join("normalized/qa.jsonl")
    }
    pub fn corpus_vectors(&self) -> PathBuf {
        self.root.join("vectors/corpus.jsonl")
    }
    pub fn qa_vectors(&self) -> PathBuf {
        self.root.join("vectors/qa.jsonl")
    }
    pub fn index_shard(&self, shard: usize) -> PathBuf {
        self.root.join(format!("index/shard-{shard:03}.idx"))
    }
    pub fn dataset(&self, variant: Variant) -> PathBuf {
        self.root.join(format!("datasets/{variant}.jsonl"))
    }
    pub fn dataset_state(&self, variant: Variant) -> PathBuf {
        self.root.join(format!("datasets/{variant}.state.jsonl"))
    }
    pub fn mining_log(&self) -> PathBuf {
        self.root.join("reports/mining_log.jsonl")
    }
    pub fn stats_report(&self, name: &str) -> PathBuf {
        self.root.join(format!("reports/stats_{name}.json"))
    }
    pub fn stats_csv_dir(&self, name: &str) -> PathBuf {
        self.root.join(format!("reports/{name}"))
    }
    pub fn system_output(&self, method: &str) -> PathBuf {
        self.root.join(format!("reports/system_{method}.jsonl"))
    }
    pub fn eval_report(&self, method: &str) -> PathBuf {
        self.root.join(format!("reports/eval_{method}.json"))
    }
    pub fn manifest(&self, stage: &str) -> PathBuf {
        self.root.join(format!("manifests/{stage}.json"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    stage: String,
    config_sha256: String,
    inputs: Vec<ManifestEntry>,
    outputs: Vec<ManifestEntry>,
}

/// Counts reported by `ingest`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub documents_skipped: usize,
    pub qa_examples: usize,
    pub qa_skipped: usize,
}

/// Counts reported by `mine`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineSummary {
    pub emitted: usize,
    pub low_recall: usize,
    pub no_matches: usize,
}

pub struct Pipeline {
    config: PipelineConfig,
    workdir: Workdir,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Pipeline> {
        config.validate()?;
        let workdir = Workdir::new(&config.workdir);
        Ok(Pipeline { config, workdir })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workdir(&self) -> &Workdir {
        &self.workdir
    }

    fn require(&self, path: &Path, stage: &str) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                stage: stage.to_string(),
            });
        }
        Ok(())
    }

    fn write_manifest(&self, stage: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        let digest = |path: &PathBuf| -> Result<ManifestEntry> {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path.clone(), e))?;
            let rel = path
                .strip_prefix(&self.config.workdir)
                .map(|p| p.display().to_string())
                .unwrap_or_else(|_| path.display().to_string());
            Ok(ManifestEntry {
                path: rel,
                sha256: hex(&Sha256::digest(&bytes)),
            })
        };
        let manifest = Manifest {
            stage: stage.to_string(),
            config_sha256: hex(&Sha256::digest(self.config.to_file_string().as_bytes())),
            inputs: inputs.iter().map(digest).collect::<Result<_>>()?,
            outputs: outputs.iter().map(digest).collect::<Result<_>>()?,
        };
        let path = self.workdir.manifest(stage);
        let mut w = corpus::writer(&path)?;
        corpus::write_json_line(&mut w, &manifest, &path)?;
        use std::io::Write;
        w.flush().map_err(|e| Error::io(&path, e))
    }

    /// Validates the raw corpora and writes normalized copies every later
    /// stage reads.
    pub fn ingest(&self) -> Result<IngestSummary> {
        self.require(&self.config.documents, "ingest")?;
        self.require(&self.config.qa, "ingest")?;
        let corpus = corpus::load_documents(&self.config.documents)?;
        let qa = corpus::load_qa_examples(&self.config.qa)?;
        corpus::write_documents(&corpus, &self.workdir.normalized_documents())?;
        corpus::write_qa_examples(&qa.examples, &self.workdir.normalized_qa())?;
        self.write_manifest(
            "ingest",
            &[self.config.documents.clone(), self.config.qa.clone()],
            &[
                self.workdir.normalized_documents(),
                self.workdir.normalized_qa(),
            ],
        )?;
        Ok(IngestSummary {
            documents: corpus.len(),
            documents_skipped: corpus.skipped_empty(),
            qa_examples: qa.examples.len(),
            qa_skipped: qa.skipped,
        })
    }

    fn load_normalized(&self, stage: &str) -> Result<(DocumentCorpus, Vec<QaExample>)> {
        self.require(&self.workdir.normalized_documents(), stage)?;
        self.require(&self.workdir.normalized_qa(), stage)?;
        let corpus = corpus::load_documents(&self.workdir.normalized_documents())?;
        let qa = corpus::load_qa_examples(&self.workdir.normalized_qa())?;
        Ok((corpus, qa.examples))
    }

    /// Produces unit vectors for every corpus sentence and every answer
    /// sentence, either with the baseline embedder or from a precomputed
    /// vector file partitioned by key.
    pub fn embed(&self) -> Result<(usize, usize)> {
        let (corpus, qa) = self.load_normalized("ingest")?;
        let mut corpus_store = VectorStore::new(self.config.dimension);
        let mut qa_store = VectorStore::new(self.config.dimension);
        match self.config.embedder {
            EmbedderChoice::Baseline => {
                let embedder = BaselineEmbedder::new(self.config.dimension)?;
                for doc in corpus.iter() {
                    for s in &doc.sentences {
                        corpus_store
                            .insert(SentenceKey::for_sentence(s), embedder.encode(s)?)?;
                    }
                }
                for example in &qa {
                    for s in &example.answer_sentences {
                        qa_store.insert(SentenceKey::for_sentence(s), embedder.encode(s)?)?;
                    }
                }
            }
            EmbedderChoice::Precomputed => {
                let path = self.config.vectors.as_ref().expect("validated");
                self.require(path, "embed")?;
                let store = load_vectors(path, self.config.dimension)?;
                let qa_ids: std::collections::BTreeSet<&str> =
                    qa.iter().map(|e| e.example_id.as_str()).collect();
                for (key, vector) in store.iter() {
                    if qa_ids.contains(key.id.as_str()) {
                        qa_store.insert(key.clone(), vector.clone())?;
                    } else if corpus.get(&key.id).is_some() {
                        corpus_store.insert(key.clone(), vector.clone())?;
                    } else {
                        return Err(Error::MissingVector {
                            key: format!("{key} (no matching document or example)"),
                        });
                    }
                }
            }
        }
        save_vectors(&corpus_store, &self.workdir.corpus_vectors())?;
        save_vectors(&qa_store, &self.workdir.qa_vectors())?;
        self.write_manifest(
            "embed",
            &[
                self.workdir.normalized_documents(),
                self.workdir.normalized_qa(),
            ],
            &[self.workdir.corpus_vectors(), self.workdir.qa_vectors()],
        )?;
        Ok((corpus_store.len(), qa_store.len()))
    }

    fn shard_of(&self, key: &SentenceKey) -> usize {
        (fnv1a_64(key.id.as_bytes()) % self.config.shards as u64) as usize
    }

    /// Builds one spill tree per corpus shard. Documents route to shards by
    /// id hash; in exact mode the shard count never changes query results.
    pub fn build_indexes(&self) -> Result<Vec<usize>> {
        self.require(&self.workdir.corpus_vectors(), "embed")?;
        let store = load_vectors(&self.workdir.corpus_vectors(), self.config.dimension)?;
        let mut shard_stores: Vec<VectorStore> = (0..self.config.shards)
            .map(|_| VectorStore::new(self.config.dimension))
            .collect();
        for (key, vector) in store.iter() {
            shard_stores[self.shard_of(key)].insert(key.clone(), vector.clone())?;
        }
        let mut sizes = Vec::with_capacity(self.config.shards);
        let mut outputs = Vec::new();
        for (i, shard_store) in shard_stores.iter().enumerate() {
            let index = build_index(
                shard_store,
                self.config.leaf_capacity,
                self.config.spill_fraction,
                self.config.seed.wrapping_add(i as u64),
            )?;
            save_index(&index, &self.workdir.index_shard(i))?;
            sizes.push(index.len());
            outputs.push(self.workdir.index_shard(i));
        }
        self.write_manifest("index", &[self.workdir.corpus_vectors()], &outputs)?;
        Ok(sizes)
    }

    fn load_shards(&self, stage: &str) -> Result<Vec<Index>> {
        let mut shards = Vec::with_capacity(self.config.shards);
        for i in 0..self.config.shards {
            let path = self.workdir.index_shard(i);
            self.require(&path, stage)?;
            shards.push(load_index(&path)?);
        }
        Ok(shards)
    }

    fn search_mode(&self) -> SearchMode {
        if self.config.exact_mode {
            SearchMode::Exact
        } else {
            SearchMode::Approximate
        }
    }

    /// Mines every QA example in parallel and writes the abstractive
    /// dataset, its full state (for the extractive stage) and the mining
    /// log, all ordered by example id.
    pub fn mine(&self) -> Result<MineSummary> {
        let (corpus, mut qa) = self.load_normalized("ingest")?;
        self.require(&self.workdir.qa_vectors(), "embed")?;
        let answer_vectors = load_vectors(&self.workdir.qa_vectors(), self.config.dimension)?;
        let shards = self.load_shards("index")?;
        qa.sort_by(|a, b| a.example_id.cmp(&b.example_id));

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| Error::InvalidConfig {
                field: "threads".into(),
                reason: e.to_string(),
            })?;
        let mode = self.search_mode();
        let config = &self.config.miner;
        let outcomes: Vec<(String, MineOutcome)> = pool.install(|| {
            qa.par_iter()
                .map(|example| {
                    mine_example(example, &corpus, &answer_vectors, &shards, config, mode)
                        .map(|outcome| (example.example_id.clone(), outcome))
                })
                .collect::<Result<_>>()
        })?;

        let mut summary = MineSummary {
            emitted: 0,
            low_recall: 0,
            no_matches: 0,
        };
        let mut examples: Vec<QmdsExample> = Vec::new();
        let mut log: Vec<MiningLogRecord> = Vec::new();
        for (example_id, outcome) in &outcomes {
            log.push(MiningLogRecord::from_outcome(example_id, outcome));
            match outcome {
                MineOutcome::Emitted(example) => {
                    summary.emitted += 1;
                    examples.push((**example).clone());
                }
                MineOutcome::Rejected { reason, .. } => match reason {
                    crate::miner::RejectReason::LowRecall => summary.low_recall += 1,
                    crate::miner::RejectReason::NoMatches => summary.no_matches += 1,
                },
            }
        }

        let records: Vec<DatasetRecord> = examples.iter().map(|e| e.to_record()).collect();
        corpus::write_dataset(
            &records,
            &self.workdir.dataset(Variant::Abstractive),
            Variant::Abstractive,
        )?;
        write_state(&examples, &self.workdir.dataset_state(Variant::Abstractive))?;
        let log_path = self.workdir.mining_log();
        let mut w = corpus::writer(&log_path)?;
        for record in &log {
            corpus::write_json_line(&mut w, record, &log_path)?;
        }
        use std::io::Write;
        w.flush().map_err(|e| Error::io(&log_path, e))?;

        self.write_manifest(
            "mine",
            &[
                self.workdir.normalized_documents(),
                self.workdir.normalized_qa(),
                self.workdir.qa_vectors(),
            ],
            &[
                self.workdir.dataset(Variant::Abstractive),
                self.workdir.dataset_state(Variant::Abstractive),
                self.workdir.mining_log(),
            ],
        )?;
        Ok(summary)
    }

    /// Transforms the mined abstractive examples into their conjugate
    /// extractive variants.
    pub fn extractive(&self) -> Result<usize> {
        let state_path = self.workdir.dataset_state(Variant::Abstractive);
        self.require(&state_path, "mine")?;
        let examples = read_state(&state_path)?;
        let extractive: Vec<QmdsExample> = examples
            .iter()
            .map(make_extractive)
            .collect::<Result<_>>()?;
        let records: Vec<DatasetRecord> = extractive.iter().map(|e| e.to_record()).collect();
        corpus::write_dataset(
            &records,
            &self.workdir.dataset(Variant::Extractive),
            Variant::Extractive,
        )?;
        write_state(&extractive, &self.workdir.dataset_state(Variant::Extractive))?;
        self.write_manifest(
            "extractive",
            &[state_path],
            &[
                self.workdir.dataset(Variant::Extractive),
                self.workdir.dataset_state(Variant::Extractive),
            ],
        )?;
        Ok(extractive.len())
    }

    /// Computes the statistics report for one dataset file.
    pub fn stats(&self, dataset: &Path, name: &str) -> Result<StatsReport> {
        self.require(dataset, "mine")?;
        let records = corpus::read_dataset(dataset)?;
        let report = dataset_stats(&records)?;
        let report_path = self.workdir.stats_report(name);
        write_pretty_json(&report, &report_path)?;
        let csv_dir = self.workdir.stats_csv_dir(name);
        write_stats_csvs(&report, &csv_dir)?;
        self.write_manifest(
            &format!("stats_{name}"),
            &[dataset.to_path_buf()],
            &[
                report_path,
                csv_dir.join("coverage_density.csv"),
                csv_dir.join("overlap.csv"),
            ],
        )?;
        Ok(report)
    }

    /// Runs the TextRank baseline (optionally behind the query paragraph
    /// filter) over a dataset file and emits system summaries in the dataset
    /// schema, so `eval` can score them directly.
    pub fn baseline_textrank(
        &self,
        dataset: &Path,
        max_paragraphs: Option<usize>,
        num_sentences: usize,
    ) -> Result<PathBuf> {
        self.require(dataset, "mine")?;
        let records = corpus::read_dataset(dataset)?;
        if records.is_empty() {
            return Err(Error::EmptyInput {
                what: "baseline dataset".into(),
            });
        }
        let variant = records[0].variant;
        let mut outputs = Vec::with_capacity(records.len());
        for record in &records {
            let docs: Vec<crate::corpus::Document> = record
                .input_docs
                .iter()
                .filter_map(|d| crate::corpus::Document::from_text(&d.id, &d.url, &d.text))
                .collect();
            let docs = match max_paragraphs {
                Some(budget) => query_filter(&record.query, &docs, budget)?,
                None => docs,
            };
            let summary = textrank_summarize(&docs, num_sentences)?;
            let mut out = record.clone();
            out.target = summary.text();
            outputs.push(out);
        }
        let method = if max_paragraphs.is_some() {
            "textrank_query"
        } else {
            "textrank"
        };
        let path = self.workdir.system_output(method);
        corpus::write_dataset(&outputs, &path, variant)?;
        self.write_manifest(
            &format!("baseline_{method}"),
            &[dataset.to_path_buf()],
            &[path.clone()],
        )?;
        Ok(path)
    }

    /// Scores a system dataset file against reference targets.
    pub fn eval(&self, system: &Path, reference: &Path, method: &str) -> Result<EvalReport> {
        self.require(system, "baseline")?;
        self.require(reference, "mine")?;
        let system_records = corpus::read_dataset(system)?;
        let reference_records = corpus::read_dataset(reference)?;
        let report = evaluate_system(method, &system_records, &reference_records)?;
        let path = self.workdir.eval_report(method);
        write_pretty_json(&report, &path)?;
        self.write_manifest(
            &format!("eval_{method}"),
            &[system.to_path_buf(), reference.to_path_buf()],
            &[path],
        )?;
        Ok(report)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_pretty_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = corpus::writer(path)?;
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    use std::io::Write;
    writeln!(w, "{text}").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_state(examples: &[QmdsExample], path: &Path) -> Result<()> {
    let mut sorted: Vec<&QmdsExample> = examples.iter().collect();
    sorted.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    let mut w = corpus::writer(path)?;
    for example in sorted {
        corpus::write_json_line(&mut w, example, path)?;
    }
    use std::io::Write;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads back the full mined examples (internal sidecar of the dataset
/// files).
pub fn read_state(path: &Path) -> Result<Vec<QmdsExample>> {
    let mut out = Vec::new();
    for (line_no, line) in corpus::read_lines(path)?.into_iter() {
        let example: QmdsExample =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
        out.push(example);
    }
    Ok(out)
}
