//! Wire-level clients for the four NOAA data families behind a shared
//! record/replay [`transport::Transport`].

pub mod coops;
pub mod cora;
pub mod crw;
pub mod netcdf;
pub mod transport;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ProvidersConfig;
use crate::coverage::CoverageTable;
use crate::model::Provenance;
use transport::{RawRecord, Request, Transport, TransportError};

pub use coops::{Interval, StationMeta, StationSeries};
pub use cora::{CoraSeries, NodeInfo};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("unknown station {0}")]
    StationUnknown(String),
    #[error("provider error from {url}: {message}")]
    ProviderError {
        url: String,
        status: Option<u16>,
        message: String,
        excerpt: String,
        retryable: bool,
    },
    #[error("no usable data: {0}")]
    GapOnly(String),
    #[error("outside dataset coverage: {0}")]
    OutOfCoverage(String),
    #[error("no valid model node within {radius_km} km")]
    NoValidNode { radius_km: f64 },
    #[error("malformed provider payload: {0}")]
    FormatError(String),
}

impl ClientError {
    pub fn retryable(&self) -> bool {
        matches!(self, ClientError::ProviderError { retryable: true, .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ClientError::StationUnknown(_) => "StationUnknown",
            ClientError::ProviderError { .. } => "ProviderError",
            ClientError::GapOnly(_) => "GapOnly",
            ClientError::OutOfCoverage(_) => "OutOfCoverage",
            ClientError::NoValidNode { .. } => "NoValidNode",
            ClientError::FormatError(_) => "FormatError",
        }
    }
}

impl From<TransportError> for ClientError {
    fn from(e: TransportError) -> Self {
        let url = match &e {
            TransportError::NotRecorded { url, .. } | TransportError::Network { url, .. } => url.clone(),
            TransportError::Store(_) => String::new(),
        };
        ClientError::ProviderError {
            url,
            status: None,
            retryable: e.retryable(),
            message: e.to_string(),
            excerpt: String::new(),
        }
    }
}

pub(crate) fn excerpt(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    let mut out: String = text.chars().take(240).collect();
    if text.chars().count() > 240 {
        out.push('…');
    }
    out
}

/// Data plus the provenance record describing how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fetched<T> {
    pub data: T,
    pub provenance: Provenance,
}

/// Entry point for all provider fetches.
pub struct NoaaClients {
    transport: Arc<Transport>,
    config: ProvidersConfig,
    coverage: CoverageTable,
}

impl NoaaClients {
    pub fn new(transport: Arc<Transport>, config: ProvidersConfig) -> Self {
        let coverage = config.coverage_table();
        NoaaClients {
            transport,
            config,
            coverage,
        }
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn config(&self) -> &ProvidersConfig {
        &self.config
    }

    pub fn coverage(&self) -> &CoverageTable {
        &self.coverage
    }

    /// Fetches and rejects HTTP-level failures.
    fn get(&self, url: String, closed: bool) -> Result<RawRecord, ClientError> {
        let rec = self.transport.fetch(&Request::get(url).closed(closed))?;
        if rec.status >= 400 {
            return Err(ClientError::ProviderError {
                url: rec.url.clone(),
                status: Some(rec.status),
                message: format!("HTTP {}", rec.status),
                excerpt: excerpt(&rec.bytes),
                retryable: rec.status >= 500 || rec.status == 429,
            });
        }
        Ok(rec)
    }

    fn is_closed(&self, family: crate::model::DatasetFamily, end: DateTime<Utc>) -> bool {
        self.coverage.window(family).is_closed(end, Utc::now())
    }
}

/// Fills `{key}` placeholders in a URL template.
pub(crate) fn fill_template(template: &str, values: &[(&str, String)]) -> String {
    values
        .iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}
