use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use seagrounded::dispatch::emit_function_schemas;
use seagrounded::engine::Engine;
use seagrounded::orchestrator::Mode;
use seagrounded::retrieval::{ingest_dir, DocStore, HashingEmbedder, DEFAULT_CHUNK_SIZE, DEFAULT_DIM, DEFAULT_OVERLAP};
use seagrounded::service::{serve, turn_error_response};

#[derive(Parser)]
#[command(name = "seagrounded", version, about = "Grounded answers over NOAA water level and SST data")]
struct Cli {
    /// Service configuration file.
    #[arg(long, short, env = "SEAGROUNDED_CONFIG", default_value = "data/config/seagrounded.toml", global = true)]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve,
    /// Answer one question and print the answer.
    Query {
        text: String,
        #[arg(long, default_value = "deterministic")]
        mode: String,
        /// Print the full answer as JSON instead of its text.
        #[arg(long)]
        json: bool,
    },
    /// Print the function schemas offered to models.
    Functions,
    /// Add `*.txt` files (with `.meta.json` sidecars) to a corpus snapshot.
    Ingest {
        dir: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: usize,
    },
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Ingest {
            dir,
            snapshot,
            chunk_size,
            overlap,
        } => {
            let store = DocStore::open(&snapshot, Arc::new(HashingEmbedder::new(DEFAULT_DIM))).map_err(|e| e.to_string())?;
            let n = ingest_dir(&store, &dir, chunk_size, overlap).map_err(|e| e.to_string())?;
            store.compact().map_err(|e| e.to_string())?;
            println!("ingested {n} chunks; store holds {} chunks from {} documents", store.len(), store.doc_count());
            Ok(())
        }
        Command::Serve => {
            let engine = Arc::new(Engine::load(&cli.config).map_err(|e| e.to_string())?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(serve(engine)).map_err(|e| e.to_string())
        }
        Command::Functions => {
            let engine = Engine::load(&cli.config).map_err(|e| e.to_string())?;
            let schemas = emit_function_schemas(engine.registry());
            println!("{}", serde_json::to_string_pretty(&schemas).unwrap());
            Ok(())
        }
        Command::Query { text, mode, json } => {
            let mode: Mode = mode.parse()?;
            let engine = Engine::load(&cli.config).map_err(|e| e.to_string())?;
            match engine.query(&text, mode) {
                Ok(answer) if json => {
                    println!("{}", serde_json::to_string_pretty(&answer).unwrap());
                    Ok(())
                }
                Ok(answer) => {
                    println!("{}", answer.text);
                    for f in &answer.figures {
                        println!("figure: {}", engine.figures.dir().join(&f.path).display());
                    }
                    Ok(())
                }
                Err(e) => {
                    let (status, body) = turn_error_response(&e);
                    Err(format!("{status}: {}", serde_json::to_string_pretty(&body).unwrap()))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
