#![allow(dead_code)]

pub mod ncwrite;
pub mod oracles;
pub mod synthetic;

use std::path::PathBuf;

use seagrounded::config::ServiceConfig;
use seagrounded::engine::Engine;
use tempfile::TempDir;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The bundled configuration, with figures written to a fresh directory.
pub fn replay_config(figure_dir: &std::path::Path) -> ServiceConfig {
    let mut config = ServiceConfig::load(&repo_root().join("data/config/seagrounded.toml")).expect("bundled config");
    config.figure_dir = figure_dir.to_path_buf();
    config
}

pub fn replay_engine() -> (Engine, TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::from_config(replay_config(dir.path())).expect("engine from bundled config");
    (engine, dir)
}
