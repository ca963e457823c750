//! Sentence vectors compared by raw dot product.
//!
//! Two encoders hide behind [`SentenceEncoder`]: a deterministic
//! feature-hashing baseline good enough for hermetic runs, and a loader for
//! vectors computed offline by a real encoder. Every vector is re-normalized
//! to unit length at the boundary so similarity thresholds stay scale-stable.

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::hash::fnv1a_64;
use crate::tokenize::tokenize;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

pub const NORM_TOLERANCE: f64 = 1e-6;

/// Identifies the sentence behind a stored vector: document id (or QA
/// example id) plus sentence index. Serialized as `"id#index"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceKey {
    pub id: String,
    pub index: usize,
}

impl SentenceKey {
    pub fn new(id: impl Into<String>, index: usize) -> Self {
        SentenceKey {
            id: id.into(),
            index,
        }
    }

    pub fn for_sentence(sentence: &Sentence) -> Self {
        SentenceKey::new(sentence.doc_id.clone(), sentence.index)
    }
}

impl fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.id, self.index)
    }
}

impl FromStr for SentenceKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        // ids may contain '#'; the index follows the last one.
        let pos = s.rfind('#').ok_or_else(|| format!("key {s:?} has no '#'"))?;
        let index: usize = s[pos + 1..]
            .parse()
            .map_err(|_| format!("key {s:?} has a non-numeric index"))?;
        Ok(SentenceKey::new(&s[..pos], index))
    }
}

impl Serialize for SentenceKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SentenceKey {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Unit-normalized embedding of one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceVector {
    values: Vec<f64>,
}

impl SentenceVector {
    /// Normalizes `values` to unit length. Rejects non-finite components and
    /// zero vectors (`key` only labels the error).
    pub fn new(values: Vec<f64>, key: &SentenceKey) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadVector {
                key: key.to_string(),
            });
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::BadVector {
                key: key.to_string(),
            });
        }
        // Skip the division when the vector is already unit within float
        // noise, so normalization is idempotent and a save/load cycle is
        // bit-exact.
        if (norm - 1.0).abs() <= 1e-12 {
            return Ok(SentenceVector { values });
        }
        let values = values.into_iter().map(|v| v / norm).collect();
        Ok(SentenceVector { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

/// Exact dot product. Symmetric, bit-identical across calls.
pub fn similarity(u: &SentenceVector, v: &SentenceVector) -> Result<f64> {
    if u.dimension() != v.dimension() {
        return Err(Error::DimensionMismatch {
            key: String::from("<similarity>"),
            expected: u.dimension(),
            found: v.dimension(),
        });
    }
    Ok(dot(u.values(), v.values()))
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..u.len() {
        acc += u[i] * v[i];
    }
    acc
}

/// Keyed store of unit vectors sharing one dimension. Immutable after load;
/// concurrent reads are safe.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dimension: usize,
    entries: BTreeMap<SentenceKey, SentenceVector>,
}

impl VectorStore {
    pub fn new(dimension: usize) -> Self {
        VectorStore {
            dimension,
            entries: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn insert(&mut self, key: SentenceKey, vector: SentenceVector) -> Result<()> {
        if vector.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                key: key.to_string(),
                expected: self.dimension,
                found: vector.dimension(),
            });
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    pub fn get(&self, key: &SentenceKey) -> Option<&SentenceVector> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&SentenceKey, &SentenceVector)> {
        self.entries.iter()
    }
}

/// Anything that turns sentences into unit vectors.
pub trait SentenceEncoder {
    fn dimension(&self) -> usize;
    fn encode(&self, sentence: &Sentence) -> Result<SentenceVector>;
}

/// Feature-hashed bag of token unigrams and bigrams with signed buckets,
/// L2-normalized. A deterministic stand-in for a neural sentence encoder:
/// identical token sequences give identical vectors on any platform.
#[derive(Debug, Clone)]
pub struct BaselineEmbedder {
    dimension: usize,
    use_bigrams: bool,
}

impl BaselineEmbedder {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < 8 {
            return Err(Error::InvalidConfig {
                field: "dimension".into(),
                reason: format!("baseline embedder needs dimension >= 8, got {dimension}"),
            });
        }
        Ok(BaselineEmbedder {
            dimension,
            use_bigrams: true,
        })
    }

    /// Unigram-only mode; output is then invariant under token permutation.
    pub fn unigrams_only(mut self) -> Self {
        self.use_bigrams = false;
        self
    }

    fn bucket(&self, feature: &str) -> (usize, f64) {
        let h = fnv1a_64(feature.as_bytes());
        let bucket = (h % self.dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (bucket, sign)
    }
}

impl SentenceEncoder for BaselineEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, sentence: &Sentence) -> Result<SentenceVector> {
        let tokens = tokenize(&sentence.text);
        if tokens.is_empty() {
            return Err(Error::EmptySentence {
                key: SentenceKey::for_sentence(sentence).to_string(),
            });
        }
        let mut values = vec![0.0; self.dimension];
        for t in &tokens {
            let (bucket, sign) = self.bucket(&format!("u:{}", t.as_str()));
            values[bucket] += sign;
        }
        if self.use_bigrams {
            for pair in tokens.windows(2) {
                let (bucket, sign) =
                    self.bucket(&format!("b:{} {}", pair[0].as_str(), pair[1].as_str()));
                values[bucket] += sign;
            }
        }
        SentenceVector::new(values, &SentenceKey::for_sentence(sentence))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorHeader {
    dimension: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorRecord {
    key: SentenceKey,
    values: Vec<f64>,
}

/// Loads a vector file: a one-line `{"dimension": D}` header followed by one
/// `{"key", "values"}` record per line. Vectors are re-normalized; dimension
/// mismatches and non-finite components are rejected. An empty file is an
/// empty store of `expected_dimension`.
pub fn load_vectors(path: &Path, expected_dimension: usize) -> Result<VectorStore> {
    let lines = crate::corpus::read_lines(path)?;
    let mut store = VectorStore::new(expected_dimension);
    let Some((first_no, first)) = lines.first() else {
        return Ok(store);
    };
    let header: VectorHeader = serde_json::from_str(first).map_err(|e| Error::MalformedLine {
        path: path.to_path_buf(),
        line: *first_no,
        reason: format!("expected dimension header: {e}"),
    })?;
    if header.dimension != expected_dimension {
        return Err(Error::DimensionMismatch {
            key: String::from("<header>"),
            expected: expected_dimension,
            found: header.dimension,
        });
    }
    for (line_no, line) in &lines[1..] {
        let record: VectorRecord = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: *line_no,
            reason: e.to_string(),
        })?;
        if record.values.len() != expected_dimension {
            return Err(Error::DimensionMismatch {
                key: record.key.to_string(),
                expected: expected_dimension,
                found: record.values.len(),
            });
        }
        let vector = SentenceVector::new(record.values, &record.key)?;
        store.insert(record.key, vector)?;
    }
    Ok(store)
}

/// Writes a store in the vector file format, keys ascending.
pub fn save_vectors(store: &VectorStore, path: &Path) -> Result<()> {
    let mut w = crate::corpus::writer(path)?;
    let header = VectorHeader {
        dimension: store.dimension(),
    };
    crate::corpus::write_json_line(&mut w, &header, path)?;
    for (key, vector) in store.iter() {
        let record = VectorRecord {
            key: key.clone(),
            values: vector.values().to_vec(),
        };
        crate::corpus::write_json_line(&mut w, &record, path)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
