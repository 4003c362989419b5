//! Document grounding: a chunked embedding store with exact cosine search,
//! plus the web-search adapters.
//!
//! Store files: `<snapshot>.json` holds every chunk; `<snapshot>.log` is a
//! JSON-lines append log of ingests replayed on top of the snapshot at load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::transport::write_atomic;

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_CHUNK_SIZE: usize = 400;
pub const DEFAULT_OVERLAP: usize = 100;
pub const DEFAULT_TOP_K: usize = 4;
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("document {0} has no text")]
    EmptyDocument(String),
    #[error("chunk_size ({chunk_size}) must exceed overlap ({overlap})")]
    InvalidChunking { chunk_size: usize, overlap: usize },
    #[error("document store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("store file {path}: {message}")]
    Store { path: String, message: String },
    #[error("embedder mismatch: store built with {stored}, running {running}")]
    EmbedderMismatch { stored: String, running: String },
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> RetrievalError {
    RetrievalError::Store {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    /// Unit-length vector; deterministic for a fixed implementation.
    fn embed(&self, text: &str) -> Vec<f64>;
    /// Identifies the embedding space so stores are not mixed.
    fn id(&self) -> String;
}

/// Signed feature hashing of word unigrams and bigrams.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        HashingEmbedder { dim: dim.max(1) }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let ws = words(text);
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign * weight;
        };
        for w in &ws {
            add(w, 1.0);
        }
        for pair in ws.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // No features: a fixed unit vector keeps the output normalized.
            v[0] = 1.0;
            return v;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }

    fn id(&self) -> String {
        format!("hashing-fnv1a-uni-bi-{}", self.dim)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Character windows `[start, end)` of `chunk_size` stepping by `chunk_size - overlap`.
pub fn chunk_windows(len: usize, chunk_size: usize, overlap: usize) -> Result<Vec<(usize, usize)>, RetrievalError> {
    if chunk_size == 0 || chunk_size <= overlap {
        return Err(RetrievalError::InvalidChunking { chunk_size, overlap });
    }
    if len <= chunk_size {
        return Ok(vec![(0, len)]);
    }
    let step = chunk_size - overlap;
    Ok((0..len)
        .step_by(step)
        .map(|start| (start, (start + chunk_size).min(len)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DocMeta {
    pub doc_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default)]
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocChunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub embedding: Vec<f64>,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub chunk: DocChunk,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    embedder: String,
    dimension: usize,
    chunks: Vec<DocChunk>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogEntry {
    doc_id: String,
    chunks: Vec<DocChunk>,
}

/// In-memory chunk store. Readers see an immutable snapshot; ingests swap in a new one.
pub struct DocStore {
    embedder: Arc<dyn Embedder>,
    chunks: RwLock<Arc<Vec<DocChunk>>>,
    writer: Mutex<()>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for DocStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DocStore")
            .field("embedder", &self.embedder.id())
            .field("chunks", &self.len())
            .field("path", &self.path)
            .finish()
    }
}

fn log_path(snapshot: &Path) -> PathBuf {
    snapshot.with_extension("log")
}

fn replace_doc(chunks: &mut Vec<DocChunk>, doc_id: &str, new: Vec<DocChunk>) {
    chunks.retain(|c| c.doc_id != doc_id);
    chunks.extend(new);
    chunks.sort_by(|a, b| (&a.doc_id, a.chunk_index).cmp(&(&b.doc_id, b.chunk_index)));
}

impl DocStore {
    pub fn in_memory(embedder: Arc<dyn Embedder>) -> Self {
        DocStore {
            embedder,
            chunks: RwLock::new(Arc::new(Vec::new())),
            writer: Mutex::new(()),
            path: None,
        }
    }

    /// Loads `snapshot` (if present) and replays its append log.
    pub fn open(snapshot: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, RetrievalError> {
        let mut chunks = Vec::new();
        if snapshot.exists() {
            let bytes = fs::read(snapshot).map_err(|e| store_err(snapshot, e))?;
            let snap: Snapshot = serde_json::from_slice(&bytes).map_err(|e| store_err(snapshot, e))?;
            if snap.version != SNAPSHOT_VERSION {
                return Err(store_err(snapshot, format!("unsupported snapshot version {}", snap.version)));
            }
            if snap.embedder != embedder.id() {
                return Err(RetrievalError::EmbedderMismatch {
                    stored: snap.embedder,
                    running: embedder.id(),
                });
            }
            chunks = snap.chunks;
        }
        let log = log_path(snapshot);
        if log.exists() {
            let text = fs::read_to_string(&log).map_err(|e| store_err(&log, e))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let entry: LogEntry = serde_json::from_str(line).map_err(|e| store_err(&log, e))?;
                replace_doc(&mut chunks, &entry.doc_id, entry.chunks);
            }
        }
        if chunks.iter().any(|c| c.embedding.len() != embedder.dimension()) {
            return Err(store_err(snapshot, "embedding dimension differs from the embedder"));
        }
        chunks.sort_by(|a, b| (&a.doc_id, a.chunk_index).cmp(&(&b.doc_id, b.chunk_index)));
        Ok(DocStore {
            embedder,
            chunks: RwLock::new(Arc::new(chunks)),
            writer: Mutex::new(()),
            path: Some(snapshot.to_path_buf()),
        })
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// The current immutable view.
    pub fn snapshot(&self) -> Arc<Vec<DocChunk>> {
        self.chunks.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn doc_count(&self) -> usize {
        let snap = self.snapshot();
        let mut ids: Vec<&str> = snap.iter().map(|c| c.doc_id.as_str()).collect();
        ids.dedup();
        ids.len()
    }

    /// Earliest and latest publication years in the store.
    pub fn year_span(&self) -> Option<(i32, i32)> {
        let snap = self.snapshot();
        let years = snap.iter().filter_map(|c| c.year);
        let min = years.clone().min()?;
        Some((min, years.max()?))
    }

    /// Splits, embeds and stores a document, replacing earlier chunks of the same id.
    pub fn ingest(&self, meta: &DocMeta, text: &str, chunk_size: usize, overlap: usize) -> Result<usize, RetrievalError> {
        let chars: Vec<char> = text.chars().collect();
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyDocument(meta.doc_id.clone()));
        }
        let windows = chunk_windows(chars.len(), chunk_size, overlap)?;
        let new: Vec<DocChunk> = windows
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| {
                let piece: String = chars[s..e].iter().collect();
                DocChunk {
                    doc_id: meta.doc_id.clone(),
                    chunk_index: i,
                    embedding: self.embedder.embed(&piece),
                    text: piece,
                    title: meta.title.clone(),
                    year: meta.year,
                    origin: meta.origin.clone(),
                }
            })
            .collect();
        let count = new.len();

        let _turn = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(path) = &self.path {
            let log = log_path(path);
            let line = serde_json::to_string(&LogEntry {
                doc_id: meta.doc_id.clone(),
                chunks: new.clone(),
            })
            .map_err(|e| store_err(&log, e))?;
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log)
                .map_err(|e| store_err(&log, e))?;
            writeln!(f, "{line}").map_err(|e| store_err(&log, e))?;
        }
        let mut next = (*self.snapshot()).clone();
        replace_doc(&mut next, &meta.doc_id, new);
        *self.chunks.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(next);
        Ok(count)
    }

    /// Writes the full snapshot and clears the append log.
    pub fn compact(&self) -> Result<(), RetrievalError> {
        let Some(path) = &self.path else { return Ok(()) };
        let _turn = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let snap = Snapshot {
            version: SNAPSHOT_VERSION,
            embedder: self.embedder.id(),
            dimension: self.embedder.dimension(),
            chunks: (*self.snapshot()).clone(),
        };
        let bytes = serde_json::to_vec(&snap).map_err(|e| store_err(path, e))?;
        write_atomic(path, &bytes).map_err(|e| store_err(path, e))?;
        let log = log_path(path);
        if log.exists() {
            fs::remove_file(&log).map_err(|e| store_err(&log, e))?;
        }
        Ok(())
    }

    /// Exact top-k by cosine similarity; ties ordered by `(doc_id, chunk_index)`.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let snap = self.snapshot();
        if snap.is_empty() {
            return Err(RetrievalError::EmptyStore);
        }
        let q = self.embedder.embed(query);
        let mut scored: Vec<(f64, &DocChunk)> = snap.iter().map(|c| (cosine(&q, &c.embedding), c)).collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.doc_id.cmp(&b.1.doc_id))
                .then_with(|| a.1.chunk_index.cmp(&b.1.chunk_index))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, c)| SearchHit {
                chunk: c.clone(),
                score,
            })
            .collect())
    }
}

/// Ingests every `*.txt` in `dir` with its `<stem>.meta.json` sidecar, in file-name order.
pub fn ingest_dir(store: &DocStore, dir: &Path, chunk_size: usize, overlap: usize) -> Result<usize, RetrievalError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| store_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut total = 0;
    for file in files {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let sidecar = file.with_file_name(format!("{stem}.meta.json"));
        let mut meta: DocMeta = if sidecar.exists() {
            let bytes = fs::read(&sidecar).map_err(|e| store_err(&sidecar, e))?;
            serde_json::from_slice(&bytes).map_err(|e| store_err(&sidecar, e))?
        } else {
            DocMeta::default()
        };
        if meta.doc_id.is_empty() {
            meta.doc_id = stem.clone();
        }
        if meta.title.is_empty() {
            meta.title = stem;
        }
        let text = fs::read_to_string(&file).map_err(|e| store_err(&file, e))?;
        total += store.ingest(&meta, &text, chunk_size, overlap)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebResult {
    pub title: String,
    pub url: String,
    pub snippet: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WebSearchError {
    #[error("web search unavailable: {0}")]
    ProviderUnavailable(String),
}

pub trait WebSearch: Send + Sync {
    fn name(&self) -> &str;
    fn search(&self, query: &str) -> Result<Vec<WebResult>, WebSearchError>;
}

fn normalize_query(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Offline adapter answering from a fixture file keyed by query string.
#[derive(Debug, Clone, Default)]
pub struct StubWebSearch {
    results: BTreeMap<String, Vec<WebResult>>,
}

#[derive(Deserialize)]
struct StubFile {
    queries: BTreeMap<String, Vec<WebResult>>,
}

impl StubWebSearch {
    pub fn from_json(bytes: &[u8]) -> Result<Self, String> {
        let file: StubFile = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        Ok(StubWebSearch {
            results: file
                .queries
                .into_iter()
                .map(|(q, r)| (normalize_query(&q), r.into_iter().filter(|r| !r.url.is_empty()).collect()))
                .collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&bytes).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl WebSearch for StubWebSearch {
    fn name(&self) -> &str {
        "stub"
    }

    fn search(&self, query: &str) -> Result<Vec<WebResult>, WebSearchError> {
        Ok(self.results.get(&normalize_query(query)).cloned().unwrap_or_default())
    }
}

/// Always unavailable; used when web search is switched off.
#[derive(Debug, Clone, Copy, Default)]
pub struct DisabledWebSearch;

impl WebSearch for DisabledWebSearch {
    fn name(&self) -> &str {
        "disabled"
    }

    fn search(&self, _query: &str) -> Result<Vec<WebResult>, WebSearchError> {
        Err(WebSearchError::ProviderUnavailable("web search disabled by configuration".into()))
    }
}

#[derive(Deserialize)]
struct BraveBody {
    #[serde(default)]
    web: Option<BraveWeb>,
}

#[derive(Deserialize)]
struct BraveWeb {
    #[serde(default)]
    results: Vec<BraveItem>,
}

#[derive(Deserialize)]
struct BraveItem {
    #[serde(default)]
    title: String,
    #[serde(default)]
    url: String,
    #[serde(default)]
    description: String,
}

/// Parses a Brave web-search response body, dropping entries without a URL.
pub fn parse_brave_response(bytes: &[u8]) -> Result<Vec<WebResult>, WebSearchError> {
    let body: BraveBody =
        serde_json::from_slice(bytes).map_err(|e| WebSearchError::ProviderUnavailable(format!("bad response: {e}")))?;
    Ok(body
        .web
        .map(|w| w.results)
        .unwrap_or_default()
        .into_iter()
        .filter(|r| !r.url.trim().is_empty())
        .map(|r| WebResult {
            title: r.title,
            url: r.url,
            snippet: r.description,
        })
        .collect())
}

/// Live adapter for the Brave Search API.
pub struct BraveWebSearch {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl BraveWebSearch {
    pub fn new(endpoint: &str, api_key: &str, timeout: Duration) -> Result<Self, WebSearchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| WebSearchError::ProviderUnavailable(e.to_string()))?;
        Ok(BraveWebSearch {
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
            client,
        })
    }
}

impl WebSearch for BraveWebSearch {
    fn name(&self) -> &str {
        "brave"
    }

    fn search(&self, query: &str) -> Result<Vec<WebResult>, WebSearchError> {
        let resp = self
            .client
            .get(&self.endpoint)
            .query(&[("q", query), ("count", "5")])
            .header("Accept", "application/json")
            .header("X-Subscription-Token", &self.api_key)
            .send()
            .map_err(|e| WebSearchError::ProviderUnavailable(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| WebSearchError::ProviderUnavailable(e.to_string()))?;
        if !status.is_success() {
            return Err(WebSearchError::ProviderUnavailable(format!("HTTP {status}")));
        }
        parse_brave_response(&bytes)
    }
}
