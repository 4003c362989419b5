//! Configuration files: provider endpoints with the coverage table, and the
//! service configuration with environment-variable overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::transport::TransportMode;
use crate::coverage::{CoverageTable, CoverageWindow};
use crate::model::DatasetFamily;

const BUILTIN_PROVIDERS: &str = include_str!("../../../data/config/providers.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("required path for `{field}` does not exist: {path}")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("invalid value for {key}: {message}")]
    InvalidOverride { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoOpsConfig {
    pub base_url: String,
    pub application: String,
    pub max_days_water_level: i64,
    pub max_days_hourly_height: i64,
    pub max_days_monthly_mean: i64,
    #[serde(default)]
    pub bad_flag_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoraConfig {
    pub mesh_url: String,
    pub series_url: String,
    pub search_radius_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrwConfig {
    pub url_template: String,
    pub variable: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvidersConfig {
    pub version: String,
    pub coverage: BTreeMap<DatasetFamily, CoverageWindow>,
    pub coops: CoOpsConfig,
    pub cora: CoraConfig,
    pub crw: CrwConfig,
}

impl ProvidersConfig {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PROVIDERS, Path::new("<builtin providers.toml>"))
            .expect("bundled providers.toml is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ProvidersConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        for family in [
            DatasetFamily::CoOpsRealtime,
            DatasetFamily::CoOpsMonthly,
            DatasetFamily::Cora,
            DatasetFamily::Crw,
        ] {
            if !cfg.coverage.contains_key(&family) {
                return Err(ConfigError::Invalid {
                    path: path.to_path_buf(),
                    message: format!("coverage table lacks `{}`", family.key()),
                });
            }
        }
        if cfg.cora.search_radius_km <= 0.0 {
            return Err(ConfigError::Invalid {
                path: path.to_path_buf(),
                message: "cora.search_radius_km must be positive".into(),
            });
        }
        Ok(cfg)
    }

    pub fn coverage_table(&self) -> CoverageTable {
        CoverageTable {
            version: self.version.clone(),
            windows: self.coverage.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WebSearchMode {
    #[default]
    Stub,
    Live,
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WebSearchConfig {
    #[serde(default)]
    pub mode: WebSearchMode,
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_model_timeout")]
    pub timeout_secs: u64,
}

fn default_model_timeout() -> u64 {
    60
}

fn default_rate_limit() -> f64 {
    2.0
}

fn default_timeout() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen: String,
    pub transport: TransportMode,
    pub fixture_dir: PathBuf,
    #[serde(default)]
    pub corpus_snapshot: Option<PathBuf>,
    pub figure_dir: PathBuf,
    pub gazetteer: PathBuf,
    pub providers: PathBuf,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub web_search: WebSearchConfig,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    #[serde(default = "default_rate_limit")]
    pub rate_limit_per_sec: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Pins the clock used for relative time expressions.
    #[serde(default)]
    pub fixed_now: Option<DateTime<Utc>>,
}

impl ServiceConfig {
    /// Loads a config file, resolves relative paths against its directory and
    /// applies `SEAGROUNDED_*` environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let vars: Vec<(String, String)> = std::env::vars().collect();
        Self::load_with_env(path, vars)
    }

    pub fn load_with_env(
        path: &Path,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ServiceConfig = toml::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_relative(base);
        cfg.apply_env(env)?;
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.fixture_dir);
        fix(&mut self.figure_dir);
        fix(&mut self.gazetteer);
        fix(&mut self.providers);
        if let Some(p) = self.corpus_snapshot.as_mut() {
            fix(p);
        }
        if let Some(p) = self.web_search.fixture.as_mut() {
            fix(p);
        }
    }

    pub fn apply_env(&mut self, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in env {
            let Some(name) = key.strip_prefix("SEAGROUNDED_") else {
                continue;
            };
            match name {
                "LISTEN" => self.listen = value,
                "TRANSPORT" => {
                    self.transport = value.parse().map_err(|message| ConfigError::InvalidOverride {
                        key: key.clone(),
                        message,
                    })?
                }
                "FIXTURE_DIR" => self.fixture_dir = value.into(),
                "FIGURE_DIR" => self.figure_dir = value.into(),
                "CORPUS" => self.corpus_snapshot = Some(value.into()),
                "GAZETTEER" => self.gazetteer = value.into(),
                "PROVIDERS" => self.providers = value.into(),
                "MODEL_BASE_URL" => {
                    let model = self.model.get_or_insert_with(|| ModelConfig {
                        base_url: String::new(),
                        model: String::new(),
                        api_key_env: None,
                        timeout_secs: default_model_timeout(),
                    });
                    model.base_url = value;
                }
                "MODEL_NAME" => {
                    if let Some(model) = self.model.as_mut() {
                        model.model = value;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Fails on the first required path that does not exist.
    pub fn check_paths(&self) -> Result<(), ConfigError> {
        let mut required: Vec<(&'static str, &Path)> = vec![
            ("gazetteer", self.gazetteer.as_path()),
            ("providers", self.providers.as_path()),
        ];
        if self.transport == TransportMode::Replay {
            required.push(("fixture_dir", self.fixture_dir.as_path()));
        }
        if let Some(p) = &self.corpus_snapshot {
            required.push(("corpus_snapshot", p.as_path()));
        }
        if self.web_search.mode == WebSearchMode::Stub {
            if let Some(p) = &self.web_search.fixture {
                required.push(("web_search.fixture", p.as_path()));
            }
        }
        for (field, path) in required {
            if !path.exists() {
                return Err(ConfigError::MissingPath {
                    field,
                    path: path.to_path_buf(),
                });
            }
        }
        Ok(())
    }
}
