//! Pipeline configuration: a plain key = value file, `#` comments allowed,
//! unknown keys rejected. Relative paths resolve against the config file's
//! directory; the path-valued keys can be overridden with `QMDS_*`
//! environment variables.

use crate::error::{Error, Result};
use crate::miner::MinerConfig;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderChoice {
    /// Deterministic hashing embedder; hermetic runs.
    Baseline,
    /// Load vectors computed offline from the `vectors` path.
    Precomputed,
}

impl std::fmt::Display for EmbedderChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbedderChoice::Baseline => f.write_str("baseline"),
            EmbedderChoice::Precomputed => f.write_str("precomputed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub documents: PathBuf,
    pub qa: PathBuf,
    pub vectors: Option<PathBuf>,
    pub workdir: PathBuf,
    pub embedder: EmbedderChoice,
    pub dimension: usize,
    pub leaf_capacity: usize,
    pub spill_fraction: f64,
    pub seed: u64,
    pub exact_mode: bool,
    pub miner: MinerConfig,
    pub shards: usize,
    pub threads: usize,
}

impl PipelineConfig {
    pub fn new(documents: PathBuf, qa: PathBuf, workdir: PathBuf) -> Self {
        PipelineConfig {
            documents,
            qa,
            vectors: None,
            workdir,
            embedder: EmbedderChoice::Baseline,
            dimension: 512,
            leaf_capacity: 64,
            spill_fraction: 0.1,
            seed: 0,
            exact_mode: true,
            miner: MinerConfig::default(),
            shards: 1,
            threads: 1,
        }
    }

    /// Parses a config file, applies `QMDS_*` path overrides and validates.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::new(PathBuf::new(), PathBuf::new(), PathBuf::new());
        let mut saw = std::collections::BTreeSet::new();
        for (line_no, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::MalformedLine {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    reason: "expected key = value".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            saw.insert(key.to_string());
            config.apply(key, value)?;
        }
        for required in ["documents", "qa", "workdir"] {
            if !saw.contains(required) && std::env::var(env_key(required)).is_err() {
                return Err(Error::InvalidConfig {
                    field: required.into(),
                    reason: "missing from config file".into(),
                });
            }
        }
        config.resolve_paths(&base);
        config.apply_env_overrides();
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_usize = |field: &str, v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::InvalidConfig {
                field: field.into(),
                reason: format!("not a non-negative integer: {v:?}"),
            })
        };
        let parse_f64 = |field: &str, v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::InvalidConfig {
                field: field.into(),
                reason: format!("not a number: {v:?}"),
            })
        };
        let parse_bool = |field: &str, v: &str| -> Result<bool> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Error::InvalidConfig {
                    field: field.into(),
                    reason: format!("expected true or false, got {v:?}"),
                }),
            }
        };
        match key {
            "documents" => self.documents = PathBuf::from(value),
            "qa" => self.qa = PathBuf::from(value),
            "vectors" => self.vectors = Some(PathBuf::from(value)),
            "workdir" => self.workdir = PathBuf::from(value),
            "embedder" => {
                self.embedder = match value {
                    "baseline" => EmbedderChoice::Baseline,
                    "precomputed" => EmbedderChoice::Precomputed,
                    _ => {
                        return Err(Error::InvalidConfig {
                            field: "embedder".into(),
                            reason: format!("expected baseline or precomputed, got {value:?}"),
                        })
                    }
                }
            }
            "dimension" => self.dimension = parse_usize(key, value)?,
            "leaf_capacity" => self.leaf_capacity = parse_usize(key, value)?,
            "spill_fraction" => self.spill_fraction = parse_f64(key, value)?,
            "seed" => {
                self.seed = value.parse().map_err(|_| Error::InvalidConfig {
                    field: "seed".into(),
                    reason: format!("not a u64: {value:?}"),
                })?
            }
            "exact_mode" => self.exact_mode = parse_bool(key, value)?,
            "theta_lower" => self.miner.theta_lower = parse_f64(key, value)?,
            "theta_upper" => self.miner.theta_upper = parse_f64(key, value)?,
            "top_k" => self.miner.top_k = parse_usize(key, value)?,
            "min_summary_recall" => self.miner.min_summary_recall = parse_f64(key, value)?,
            "split_train" => self.miner.split_fractions.train = parse_f64(key, value)?,
            "split_dev" => self.miner.split_fractions.dev = parse_f64(key, value)?,
            "split_test" => self.miner.split_fractions.test = parse_f64(key, value)?,
            "dedup_url_host" => self.miner.dedup_url_host = parse_bool(key, value)?,
            "shards" => self.shards = parse_usize(key, value)?,
            "threads" => self.threads = parse_usize(key, value)?,
            _ => {
                return Err(Error::UnknownConfigKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &PathBuf| {
            if p.as_os_str().is_empty() || p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        self.documents = resolve(&self.documents);
        self.qa = resolve(&self.qa);
        self.workdir = resolve(&self.workdir);
        if let Some(v) = &self.vectors {
            self.vectors = Some(resolve(v));
        }
    }

    fn apply_env_overrides(&mut self) {
        if let Ok(v) = std::env::var("QMDS_DOCUMENTS") {
            self.documents = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var("QMDS_QA") {
            self.qa = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var("QMDS_VECTORS") {
            self.vectors = Some(PathBuf::from(v));
        }
        if let Ok(v) = std::env::var("QMDS_WORKDIR") {
            self.workdir = PathBuf::from(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.miner.validate()?;
        if self.dimension < 8 {
            return Err(Error::InvalidConfig {
                field: "dimension".into(),
                reason: format!("must be >= 8, got {}", self.dimension),
            });
        }
        if self.leaf_capacity < 1 {
            return Err(Error::InvalidConfig {
                field: "leaf_capacity".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(0.0..0.5).contains(&self.spill_fraction) {
            return Err(Error::InvalidConfig {
                field: "spill_fraction".into(),
                reason: format!("must be in [0, 0.5), got {}", self.spill_fraction),
            });
        }
        if self.shards < 1 {
            return Err(Error::InvalidConfig {
                field: "shards".into(),
                reason: "must be >= 1".into(),
            });
        }
        if self.threads < 1 {
            return Err(Error::InvalidConfig {
                field: "threads".into(),
                reason: "must be >= 1".into(),
            });
        }
        if self.embedder == EmbedderChoice::Precomputed && self.vectors.is_none() {
            return Err(Error::InvalidConfig {
                field: "vectors".into(),
                reason: "embedder = precomputed needs a vectors path".into(),
            });
        }
        Ok(())
    }

    /// Canonical key = value rendering; also the bytes hashed into stage
    /// manifests.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "documents = {}", self.documents.display());
        let _ = writeln!(out, "qa = {}", self.qa.display());
        if let Some(v) = &self.vectors {
            let _ = writeln!(out, "vectors = {}", v.display());
        }
        let _ = writeln!(out, "workdir = {}", self.workdir.display());
        let _ = writeln!(out, "embedder = {}", self.embedder);
        let _ = writeln!(out, "dimension = {}", self.dimension);
        let _ = writeln!(out, "leaf_capacity = {}", self.leaf_capacity);
        let _ = writeln!(out, "spill_fraction = {}", self.spill_fraction);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "exact_mode = {}", self.exact_mode);
        let _ = writeln!(out, "theta_lower = {}", self.miner.theta_lower);
        let _ = writeln!(out, "theta_upper = {}", self.miner.theta_upper);
        let _ = writeln!(out, "top_k = {}", self.miner.top_k);
        let _ = writeln!(out, "min_summary_recall = {}", self.miner.min_summary_recall);
        let _ = writeln!(out, "split_train = {}", self.miner.split_fractions.train);
        let _ = writeln!(out, "split_dev = {}", self.miner.split_fractions.dev);
        let _ = writeln!(out, "split_test = {}", self.miner.split_fractions.test);
        let _ = writeln!(out, "dedup_url_host = {}", self.miner.dedup_url_host);
        let _ = writeln!(out, "shards = {}", self.shards);
        let _ = writeln!(out, "threads = {}", self.threads);
        out
    }
}

fn env_key(field: &str) -> String {
    format!("QMDS_{}", field.to_uppercase())
}
