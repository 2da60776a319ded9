//! Dataset directories.
//!
//! ```text
//! DIR/manifest.json          vocabulary, episode index, hashes
//! DIR/episodes/000000.txt    one line per step: <hex bitset>\t<state json>
//! ```
//!
//! The hex bitset has the first vocabulary predicate in its lowest bit. The
//! content hash is SHA-256 over the vocabulary hash followed by the episode
//! file hashes in index order, so it depends only on the bytes written.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clipquery_core::tracedb::TraceError;
use clipquery_core::{AbstractState, Abstractor, Dataset, Episode, EpisodeMeta, Vocabulary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::generator::GenerateSpec;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: corrupt file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("unsupported dataset format version {0}")]
    Version(u32),
    #[error("manifest names unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("dataset vocabulary differs from the current one (stored {stored}, current {current})")]
    VocabularyMismatch { stored: String, current: String },
    #[error("{what}: hash mismatch (manifest {expected}, found {actual})")]
    HashMismatch {
        what: String,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub id: u64,
    pub file: String,
    pub steps: usize,
    pub sha256: String,
    #[serde(flatten)]
    pub meta: EpisodeMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub vocabulary: Vocabulary,
    pub vocabulary_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenerateSpec>,
    pub content_hash: String,
    pub episodes: Vec<EpisodeEntry>,
}

/// A loaded or freshly written dataset together with its manifest.
#[derive(Debug, Clone)]
pub struct Stored<S> {
    pub manifest: Manifest,
    pub dataset: Dataset<S>,
}

impl<S> Stored<S> {
    pub fn content_hash(&self) -> &str {
        &self.manifest.content_hash
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn vocabulary_hash(v: &Vocabulary) -> String {
    sha256_hex(&serde_json::to_vec(v).expect("vocabulary serializes"))
}

fn hex_width(v: &Vocabulary) -> usize {
    v.len().max(1)
}

pub fn encode_episode<S: Serialize>(ep: &Episode<S>, v: &Vocabulary) -> Vec<u8> {
    let mut out = Vec::new();
    for (state, abs) in ep.concrete().iter().zip(ep.trace()) {
        out.extend_from_slice(abs.to_hex(hex_width(v)).as_bytes());
        out.push(b'\t');
        serde_json::to_writer(&mut out, state).expect("state serializes");
        out.push(b'\n');
    }
    out
}

fn decode_episode<S: DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<(Vec<S>, Vec<AbstractState>), StoreError> {
    let corrupt = |line: usize, reason: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let text = std::str::from_utf8(bytes).map_err(|e| corrupt(0, e.to_string()))?;
    let mut states = Vec::new();
    let mut trace = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (hex, json) = line
            .split_once('\t')
            .ok_or_else(|| corrupt(i + 1, "missing tab".into()))?;
        trace.push(AbstractState::from_hex(hex).map_err(|e| corrupt(i + 1, e.to_string()))?);
        states.push(serde_json::from_str(json).map_err(|e| corrupt(i + 1, e.to_string()))?);
    }
    Ok((states, trace))
}

fn combine(vocab_hash: &str, episode_hashes: impl IntoIterator<Item = String>) -> String {
    let mut h = Sha256::new();
    h.update(vocab_hash.as_bytes());
    for e in episode_hashes {
        h.update(b"\n");
        h.update(e.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Builds the manifest and file contents without touching the disk.
pub fn encode<S: Serialize>(dataset: &Dataset<S>, generator: Option<&GenerateSpec>) -> (Manifest, Vec<Vec<u8>>) {
    let v = dataset.vocabulary();
    let files: Vec<Vec<u8>> = dataset.episodes().iter().map(|e| encode_episode(e, v)).collect();
    let entries: Vec<EpisodeEntry> = dataset
        .episodes()
        .iter()
        .zip(&files)
        .enumerate()
        .map(|(i, (e, bytes))| EpisodeEntry {
            id: e.id(),
            file: format!("episodes/{i:06}.txt"),
            steps: e.len(),
            sha256: sha256_hex(bytes),
            meta: e.meta().clone(),
        })
        .collect();
    let vocabulary_hash = vocabulary_hash(v);
    let content_hash = combine(&vocabulary_hash, entries.iter().map(|e| e.sha256.clone()));
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        vocabulary: v.clone(),
        vocabulary_hash,
        generator: generator.cloned(),
        content_hash,
        episodes: entries,
    };
    (manifest, files)
}

pub fn content_hash<S: Serialize>(dataset: &Dataset<S>) -> String {
    encode(dataset, None).0.content_hash
}

/// Writes `dataset` into `dir`, creating it. Existing episode files are
/// overwritten.
pub fn save<S: Serialize + Clone>(
    dataset: &Dataset<S>,
    dir: &Path,
    generator: Option<&GenerateSpec>,
) -> Result<Stored<S>, StoreError> {
    let (manifest, files) = encode(dataset, generator);
    let episodes = dir.join("episodes");
    fs::create_dir_all(&episodes).map_err(io_err(&episodes))?;
    for (entry, bytes) in manifest.episodes.iter().zip(&files) {
        let path = dir.join(&entry.file);
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(Stored {
        manifest,
        dataset: dataset.clone(),
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, StoreError> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(StoreError::Version(manifest.format_version));
    }
    Ok(manifest)
}

/// Loads a dataset and checks it against the abstractor: the stored
/// vocabulary must equal the current one, every file must match its hash,
/// and every stored abstract state must equal a fresh abstraction.
pub fn load<S, A>(dir: &Path, abstractor: &A) -> Result<Stored<S>, StoreError>
where
    S: DeserializeOwned,
    A: Abstractor<S> + ?Sized,
{
    let manifest = read_manifest(dir)?;
    let current = abstractor.vocabulary();
    if let Some(p) = manifest
        .vocabulary
        .predicates()
        .iter()
        .find(|p| current.index_of(&p.name).is_none())
    {
        return Err(StoreError::UnknownPredicate(p.name.clone()));
    }
    let stored_hash = vocabulary_hash(&manifest.vocabulary);
    if stored_hash != manifest.vocabulary_hash {
        return Err(StoreError::HashMismatch {
            what: "vocabulary".into(),
            expected: manifest.vocabulary_hash.clone(),
            actual: stored_hash,
        });
    }
    let current_hash = vocabulary_hash(current);
    if current_hash != stored_hash {
        return Err(StoreError::VocabularyMismatch {
            stored: stored_hash,
            current: current_hash,
        });
    }

    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for entry in &manifest.episodes {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let actual = sha256_hex(&bytes);
        if actual != entry.sha256 {
            return Err(StoreError::HashMismatch {
                what: entry.file.clone(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        let (states, trace) = decode_episode(&bytes, &path)?;
        if states.len() != entry.steps {
            return Err(StoreError::Corrupt {
                path,
                reason: format!("{} steps, manifest says {}", states.len(), entry.steps),
            });
        }
        episodes.push(Episode::new(entry.id, entry.meta.clone(), states, trace)?);
    }
    let combined = combine(
        &manifest.vocabulary_hash,
        manifest.episodes.iter().map(|e| e.sha256.clone()),
    );
    if combined != manifest.content_hash {
        return Err(StoreError::HashMismatch {
            what: "dataset".into(),
            expected: manifest.content_hash.clone(),
            actual: combined,
        });
    }
    let dataset = Dataset::ingest(abstractor, episodes)?;
    Ok(Stored { manifest, dataset })
}
