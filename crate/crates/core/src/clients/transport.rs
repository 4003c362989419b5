//! HTTP transport with a content-addressed fixture store.
//!
//! Every response is stored under the fingerprint of its request (method,
//! scheme, host, path and the sorted query parameters). In `Replay` mode the
//! store is the only source of bytes and no socket is ever opened. `Live`
//! mode treats the store as a cache: responses for closed historical ranges
//! never expire, others are refreshed after 24 hours. `RecordThenReplay`
//! fills the store on a miss and replays from it afterwards.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const INDEX_FILE: &str = "index.json";
const INDEX_VERSION: u32 = 1;
const LIVE_TTL_HOURS: i64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    Live,
    Replay,
    RecordThenReplay,
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportMode::Live => "Live",
            TransportMode::Replay => "Replay",
            TransportMode::RecordThenReplay => "RecordThenReplay",
        })
    }
}

impl FromStr for TransportMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "live" => Ok(TransportMode::Live),
            "replay" => Ok(TransportMode::Replay),
            "record_then_replay" | "recordthenreplay" | "record" => Ok(TransportMode::RecordThenReplay),
            other => Err(format!("unknown transport mode '{other}' (live, replay, record_then_replay)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("no recorded response for {url} (fingerprint {fingerprint})")]
    NotRecorded { url: String, fingerprint: String },
    #[error("request to {url} failed: {message}")]
    Network {
        url: String,
        message: String,
        retryable: bool,
    },
    #[error("fixture store error: {0}")]
    Store(String),
}

impl TransportError {
    pub fn retryable(&self) -> bool {
        matches!(self, TransportError::Network { retryable: true, .. })
    }
}

/// An outgoing GET request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub url: String,
    /// The request covers a closed historical range whose answer cannot change.
    pub closed: bool,
}

impl Request {
    pub fn get(url: impl Into<String>) -> Self {
        Request {
            url: url.into(),
            closed: false,
        }
    }

    pub fn closed(mut self, closed: bool) -> Self {
        self.closed = closed;
        self
    }

    pub fn host(&self) -> String {
        reqwest::Url::parse(&self.url)
            .ok()
            .and_then(|u| u.host_str().map(str::to_string))
            .unwrap_or_default()
    }

    /// Stable identity of the request: URL with query parameters sorted.
    pub fn fingerprint(&self) -> String {
        let normalized = match reqwest::Url::parse(&self.url) {
            Ok(url) => {
                let mut pairs: Vec<(String, String)> =
                    url.query_pairs().map(|(k, v)| (k.into_owned(), v.into_owned())).collect();
                pairs.sort();
                let query: Vec<String> = pairs.into_iter().map(|(k, v)| format!("{k}={v}")).collect();
                format!(
                    "GET {}://{}{}{}?{}",
                    url.scheme(),
                    url.host_str().unwrap_or(""),
                    url.port().map(|p| format!(":{p}")).unwrap_or_default(),
                    url.path(),
                    query.join("&")
                )
            }
            Err(_) => format!("GET {}", self.url),
        };
        hex::encode(Sha256::digest(normalized.as_bytes()))
    }
}

/// A stored response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub request_fingerprint: String,
    pub url: String,
    pub status: u16,
    pub bytes: Vec<u8>,
    pub content_type: String,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpstreamResponse {
    pub status: u16,
    pub content_type: String,
    pub bytes: Vec<u8>,
}

/// Where bytes come from when the store misses.
pub trait Upstream: Send + Sync {
    fn get(&self, url: &str, timeout: StdDuration) -> Result<UpstreamResponse, TransportError>;

    /// Label written into the fixture index (`live`, `synthetic`, ...).
    fn origin(&self) -> &str {
        "live"
    }
}

/// Blocking HTTP upstream. The client is built on first use so that
/// `Replay` transports never construct one.
#[derive(Default)]
pub struct HttpUpstream {
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpUpstream {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Upstream for HttpUpstream {
    fn get(&self, url: &str, timeout: StdDuration) -> Result<UpstreamResponse, TransportError> {
        let client = self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .user_agent(concat!("seagrounded/", env!("CARGO_PKG_VERSION")))
                .build()
                .expect("HTTP client builds with static settings")
        });
        let resp = client.get(url).timeout(timeout).send().map_err(|e| TransportError::Network {
            url: url.to_string(),
            message: e.to_string(),
            retryable: e.is_timeout() || e.is_connect(),
        })?;
        let status = resp.status().as_u16();
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("application/octet-stream")
            .to_string();
        let bytes = resp
            .bytes()
            .map_err(|e| TransportError::Network {
                url: url.to_string(),
                message: e.to_string(),
                retryable: true,
            })?
            .to_vec();
        Ok(UpstreamResponse {
            status,
            content_type,
            bytes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    url: String,
    status: u16,
    content_type: String,
    fetched_at: DateTime<Utc>,
    file: String,
    #[serde(default)]
    origin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Index {
    version: u32,
    records: BTreeMap<String, IndexEntry>,
}

/// Directory of fingerprint-named bodies plus an `index.json` manifest.
pub struct FixtureStore {
    dir: PathBuf,
    index: Mutex<Index>,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TransportError> {
        let dir = dir.into();
        let index_path = dir.join(INDEX_FILE);
        let index = if index_path.exists() {
            let text = fs::read_to_string(&index_path).map_err(|e| TransportError::Store(e.to_string()))?;
            let index: Index = serde_json::from_str(&text)
                .map_err(|e| TransportError::Store(format!("{}: {e}", index_path.display())))?;
            if index.version != INDEX_VERSION {
                return Err(TransportError::Store(format!(
                    "unsupported fixture index version {}",
                    index.version
                )));
            }
            index
        } else {
            Index {
                version: INDEX_VERSION,
                records: BTreeMap::new(),
            }
        };
        Ok(FixtureStore {
            dir,
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, fingerprint: &str) -> Result<Option<RawRecord>, TransportError> {
        let entry = match self.index.lock().unwrap().records.get(fingerprint) {
            Some(e) => e.clone(),
            None => return Ok(None),
        };
        let bytes = fs::read(self.dir.join(&entry.file))
            .map_err(|e| TransportError::Store(format!("{}: {e}", entry.file)))?;
        Ok(Some(RawRecord {
            request_fingerprint: fingerprint.to_string(),
            url: entry.url,
            status: entry.status,
            bytes,
            content_type: entry.content_type,
            fetched_at: entry.fetched_at,
        }))
    }

    pub fn put(&self, record: &RawRecord, origin: &str) -> Result<(), TransportError> {
        let store_err = |e: std::io::Error| TransportError::Store(e.to_string());
        fs::create_dir_all(&self.dir).map_err(store_err)?;
        let file = format!("{}.body", record.request_fingerprint);
        write_atomic(&self.dir.join(&file), &record.bytes).map_err(store_err)?;
        let mut index = self.index.lock().unwrap();
        index.records.insert(
            record.request_fingerprint.clone(),
            IndexEntry {
                url: record.url.clone(),
                status: record.status,
                content_type: record.content_type.clone(),
                fetched_at: record.fetched_at,
                file,
                origin: origin.to_string(),
            },
        );
        let text = serde_json::to_string_pretty(&*index).map_err(|e| TransportError::Store(e.to_string()))?;
        write_atomic(&self.dir.join(INDEX_FILE), text.as_bytes()).map_err(store_err)
    }

    /// Origin label recorded for a fingerprint.
    pub fn origin(&self, fingerprint: &str) -> Option<String> {
        self.index
            .lock()
            .unwrap()
            .records
            .get(fingerprint)
            .map(|e| e.origin.clone())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = parent.join(format!(
        ".{}.{}.{:?}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        std::process::id(),
        std::thread::current().id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;
type Inflight = Arc<OnceLock<Result<RawRecord, TransportError>>>;

#[derive(Debug, Clone, Copy)]
pub struct TransportOptions {
    pub rate_limit_per_sec: f64,
    pub timeout: StdDuration,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            rate_limit_per_sec: 2.0,
            timeout: StdDuration::from_secs(30),
        }
    }
}

/// Shared, thread-safe transport.
pub struct Transport {
    mode: TransportMode,
    store: FixtureStore,
    upstream: Arc<dyn Upstream>,
    options: TransportOptions,
    clock: Clock,
    next_slot: Mutex<HashMap<String, Instant>>,
    inflight: Mutex<HashMap<String, Inflight>>,
}

impl Transport {
    pub fn new(mode: TransportMode, cache_dir: impl Into<PathBuf>, options: TransportOptions) -> Result<Self, TransportError> {
        Self::with_upstream(mode, cache_dir, options, Arc::new(HttpUpstream::new()))
    }

    pub fn with_upstream(
        mode: TransportMode,
        cache_dir: impl Into<PathBuf>,
        options: TransportOptions,
        upstream: Arc<dyn Upstream>,
    ) -> Result<Self, TransportError> {
        Ok(Transport {
            mode,
            store: FixtureStore::open(cache_dir)?,
            upstream,
            options,
            clock: Arc::new(Utc::now),
            next_slot: Mutex::new(HashMap::new()),
            inflight: Mutex::new(HashMap::new()),
        })
    }

    /// Replaces the wall clock used for `fetched_at` and cache expiry.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn mode(&self) -> TransportMode {
        self.mode
    }

    pub fn store(&self) -> &FixtureStore {
        &self.store
    }

    pub fn fetch(&self, req: &Request) -> Result<RawRecord, TransportError> {
        let fingerprint = req.fingerprint();
        let cached = self.store.get(&fingerprint)?;
        match self.mode {
            TransportMode::Replay => cached.ok_or(TransportError::NotRecorded {
                url: req.url.clone(),
                fingerprint,
            }),
            TransportMode::RecordThenReplay => match cached {
                Some(rec) => Ok(rec),
                None => self.fetch_coalesced(req, fingerprint),
            },
            TransportMode::Live => match cached {
                Some(rec) if self.is_fresh(&rec, req.closed) => Ok(rec),
                _ => self.fetch_coalesced(req, fingerprint),
            },
        }
    }

    fn is_fresh(&self, rec: &RawRecord, closed: bool) -> bool {
        closed || (self.clock)() - rec.fetched_at < Duration::hours(LIVE_TTL_HOURS)
    }

    /// Concurrent identical requests share one upstream call.
    fn fetch_coalesced(&self, req: &Request, fingerprint: String) -> Result<RawRecord, TransportError> {
        let cell = {
            let mut inflight = self.inflight.lock().unwrap();
            inflight.entry(fingerprint.clone()).or_default().clone()
        };
        let result = cell.get_or_init(|| self.fetch_upstream(req, &fingerprint)).clone();
        let mut inflight = self.inflight.lock().unwrap();
        if inflight.get(&fingerprint).is_some_and(|c| Arc::ptr_eq(c, &cell)) {
            inflight.remove(&fingerprint);
        }
        result
    }

    fn fetch_upstream(&self, req: &Request, fingerprint: &str) -> Result<RawRecord, TransportError> {
        self.wait_for_slot(&req.host());
        let resp = self.upstream.get(&req.url, self.options.timeout)?;
        let record = RawRecord {
            request_fingerprint: fingerprint.to_string(),
            url: req.url.clone(),
            status: resp.status,
            bytes: resp.bytes,
            content_type: resp.content_type,
            fetched_at: (self.clock)(),
        };
        // Server errors are transient; do not pin them in the store.
        if record.status < 500 {
            self.store.put(&record, self.upstream.origin())?;
        }
        Ok(record)
    }

    fn wait_for_slot(&self, host: &str) {
        if self.options.rate_limit_per_sec <= 0.0 {
            return;
        }
        let interval = StdDuration::from_secs_f64(1.0 / self.options.rate_limit_per_sec);
        let wait = {
            let mut slots = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = slots.get(host).copied().unwrap_or(now).max(now);
            slots.insert(host.to_string(), slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}
