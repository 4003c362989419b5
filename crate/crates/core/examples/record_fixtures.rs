//! Regenerates `data/fixtures` from the synthetic provider.
//!
//! ```text
//! cargo run -p seagrounded --example record_fixtures -- [fixture_dir]
//! ```
//!
//! Runs the bundled demo questions in `RecordThenReplay` mode so every
//! request they make lands in the fixture store.

#[path = "../tests/common/ncwrite.rs"]
mod ncwrite;
#[path = "../tests/common/synthetic.rs"]
mod synthetic;

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use seagrounded::clients::transport::{Transport, TransportMode, TransportOptions};
use seagrounded::clients::NoaaClients;
use seagrounded::config::ProvidersConfig;
use seagrounded::dispatch::{default_registry, Services};
use seagrounded::gazetteer::Gazetteer;
use seagrounded::orchestrator::{Mode, Orchestrator};
use seagrounded::render::FigureStore;
use seagrounded::retrieval::{DisabledWebSearch, DocStore, HashingEmbedder, DEFAULT_DIM};

pub const DEMO_QUESTIONS: &[&str] = &[
    "What is the maximum water level in Boston in 2024?",
    "What was the water level in Boston in May 2020?",
    "What is the sea level in Boston and Virginia Key in 2022?",
    "Show Boston's water level from CORA reanalysis in June 1993.",
    "What was the SST in the Gulf of Mexico in 2019?",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("data/fixtures"));
    let fetched_at = Utc.with_ymd_and_hms(2025, 6, 15, 12, 0, 0).unwrap();
    let transport = Transport::with_upstream(
        TransportMode::RecordThenReplay,
        &dir,
        TransportOptions {
            rate_limit_per_sec: 0.0,
            ..Default::default()
        },
        Arc::new(synthetic::SyntheticUpstream),
    )?
    .with_clock(move || fetched_at);
    let providers = ProvidersConfig::load(&root.join("data/config/providers.toml"))?;
    let coverage = providers.coverage_table();
    let gazetteer = Arc::new(Gazetteer::load(&root.join("data/gazetteer.csv"))?);
    let figures_dir = tempfile::tempdir()?;
    let docs = Arc::new(DocStore::in_memory(Arc::new(HashingEmbedder::new(DEFAULT_DIM))));
    let services = Arc::new(Services {
        clients: NoaaClients::new(Arc::new(transport), providers),
        gazetteer: gazetteer.clone(),
        figures: Arc::new(FigureStore::open(figures_dir.path())?),
        docs: docs.clone(),
    });
    let registry = Arc::new(default_registry(services, coverage));
    let orchestrator = Orchestrator::new(registry, gazetteer, docs, Arc::new(DisabledWebSearch))
        .with_reference_time(Utc.with_ymd_and_hms(2025, 6, 15, 0, 0, 0).unwrap());
    for q in DEMO_QUESTIONS {
        match orchestrator.run_turn(q, Mode::Deterministic) {
            Ok(a) => println!("{q}\n  {}\n", a.text.lines().next().unwrap_or_default()),
            Err(e) => {
                eprintln!("{q}\n  failed: {e}");
                return Err(e.to_string().into());
            }
        }
    }
    println!("fixtures in {}", dir.display());
    Ok(())
}
