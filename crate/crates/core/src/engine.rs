//! Builds the full pipeline from a [`ServiceConfig`].

use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::clients::transport::{Transport, TransportError, TransportMode, TransportOptions};
use crate::clients::NoaaClients;
use crate::config::{ConfigError, ProvidersConfig, ServiceConfig, WebSearchMode};
use crate::dispatch::{default_registry, Registry, Services};
use crate::gazetteer::{Gazetteer, GazetteerError};
use crate::orchestrator::{Answer, ChatError, HttpChatModel, Mode, Orchestrator, TurnError};
use crate::render::{FigureStore, RenderError};
use crate::retrieval::{
    BraveWebSearch, DisabledWebSearch, DocStore, HashingEmbedder, RetrievalError, StubWebSearch, WebSearch,
    WebSearchError, DEFAULT_DIM,
};

pub const DEFAULT_BRAVE_ENDPOINT: &str = "https://api.search.brave.com/res/v1/web/search";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("gazetteer: {0}")]
    Gazetteer(#[from] GazetteerError),
    #[error("figure store: {0}")]
    Figures(#[from] RenderError),
    #[error("corpus: {0}")]
    Corpus(#[from] RetrievalError),
    #[error("web search: {0}")]
    WebSearch(String),
    #[error("model adapter: {0}")]
    Model(#[from] ChatError),
}

impl From<WebSearchError> for EngineError {
    fn from(e: WebSearchError) -> Self {
        EngineError::WebSearch(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub transport_mode: String,
    pub corpus_chunks: usize,
    pub corpus_documents: usize,
    pub functions: usize,
    pub web_search: String,
    pub model_backed: bool,
}

/// Shared, immutable state behind the CLI and the HTTP service.
pub struct Engine {
    pub config: ServiceConfig,
    pub orchestrator: Orchestrator,
    pub figures: Arc<FigureStore>,
    pub docs: Arc<DocStore>,
    transport_mode: TransportMode,
    web_name: String,
}

impl Engine {
    pub fn load(path: &std::path::Path) -> Result<Self, EngineError> {
        Self::from_config(ServiceConfig::load(path)?)
    }

    pub fn from_config(config: ServiceConfig) -> Result<Self, EngineError> {
        Self::from_config_with(config, |_| Ok(()))
    }

    /// Like [`Engine::from_config`], with a hook to register extra functions.
    pub fn from_config_with(
        config: ServiceConfig,
        extend: impl FnOnce(&mut Registry) -> Result<(), crate::dispatch::DispatchError>,
    ) -> Result<Self, EngineError> {
        config.check_paths()?;
        let providers = ProvidersConfig::load(&config.providers)?;
        let coverage = providers.coverage_table();
        let gazetteer = Arc::new(Gazetteer::load(&config.gazetteer)?);
        let transport = Transport::new(
            config.transport,
            &config.fixture_dir,
            TransportOptions {
                rate_limit_per_sec: config.rate_limit_per_sec,
                timeout: Duration::from_secs(config.timeout_secs),
            },
        )?;
        let clients = NoaaClients::new(Arc::new(transport), providers);
        let figures = Arc::new(FigureStore::open(&config.figure_dir)?);
        let embedder = Arc::new(HashingEmbedder::new(DEFAULT_DIM));
        let docs = Arc::new(match &config.corpus_snapshot {
            Some(p) => DocStore::open(p, embedder)?,
            None => DocStore::in_memory(embedder),
        });
        let web: Arc<dyn WebSearch> = match config.web_search.mode {
            WebSearchMode::Stub => match &config.web_search.fixture {
                Some(p) => Arc::new(StubWebSearch::load(p).map_err(EngineError::WebSearch)?),
                None => Arc::new(StubWebSearch::default()),
            },
            WebSearchMode::Live => {
                let var = config.web_search.api_key_env.as_deref().unwrap_or("BRAVE_API_KEY");
                let key = std::env::var(var)
                    .map_err(|_| EngineError::WebSearch(format!("environment variable {var} is not set")))?;
                let endpoint = config.web_search.endpoint.as_deref().unwrap_or(DEFAULT_BRAVE_ENDPOINT);
                Arc::new(BraveWebSearch::new(endpoint, &key, Duration::from_secs(config.timeout_secs))?)
            }
            WebSearchMode::Disabled => Arc::new(DisabledWebSearch),
        };
        let services = Arc::new(Services {
            clients,
            gazetteer: gazetteer.clone(),
            figures: figures.clone(),
            docs: docs.clone(),
        });
        let mut registry = default_registry(services, coverage);
        extend(&mut registry).map_err(|e| EngineError::Config(ConfigError::InvalidOverride {
            key: "registry".into(),
            message: e.to_string(),
        }))?;
        let web_name = web.name().to_string();
        let mut orchestrator = Orchestrator::new(Arc::new(registry), gazetteer, docs.clone(), web);
        if let Some(t) = config.fixed_now {
            orchestrator = orchestrator.with_reference_time(t);
        }
        if let Some(m) = config.model.as_ref().filter(|m| !m.base_url.is_empty()) {
            let key = m.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
            let model = HttpChatModel::new(&m.base_url, &m.model, key, Duration::from_secs(m.timeout_secs))?;
            orchestrator = orchestrator.with_model(Arc::new(model));
        }
        Ok(Engine {
            transport_mode: config.transport,
            config,
            orchestrator,
            figures,
            docs,
            web_name,
        })
    }

    /// Swaps the orchestrator, e.g. to attach a different chat model.
    pub fn map_orchestrator(mut self, f: impl FnOnce(Orchestrator) -> Orchestrator) -> Self {
        self.orchestrator = f(self.orchestrator);
        self
    }

    pub fn query(&self, text: &str, mode: Mode) -> Result<Answer, TurnError> {
        self.orchestrator.run_turn(text, mode)
    }

    pub fn registry(&self) -> &Registry {
        self.orchestrator.registry()
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok",
            transport_mode: self.transport_mode.to_string(),
            corpus_chunks: self.docs.len(),
            corpus_documents: self.docs.doc_count(),
            functions: self.registry().len(),
            web_search: self.web_name.clone(),
            model_backed: self.orchestrator.has_model(),
        }
    }
}
