//! Experiment harness for the federated-learning-over-wireless simulator:
//! TOML configuration with named presets, client-population construction,
//! round orchestration for every protocol, held-out evaluation, and CSV
//! metric persistence.
//!
//! The heavy lifting (learning kernel, workload generator, radio model,
//! resource optimizer, protocol updates) lives in `osafl-core`; this crate
//! wires those pieces into reproducible experiments: one `(config, seed)`
//! pair always produces byte-identical metrics, regardless of how many
//! worker threads carry the per-client work.

pub mod config;
pub mod metrics;
pub mod population;
pub mod presets;
pub mod runner;
