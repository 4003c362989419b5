pub mod analysis;
pub mod clients;
pub mod config;
pub mod coverage;
pub mod dispatch;
pub mod engine;
pub mod gazetteer;
pub mod intent;
pub mod model;
pub mod orchestrator;
pub mod render;
pub mod retrieval;
pub mod service;
