//! Canonical correlation forests and a per-pixel multispectral material
//! mapping toolchain: scene and survey ingestion, training-set preparation,
//! whole-scene classification, palette rendering and scoring against
//! partial ground-truth masks.

pub mod cca;
pub mod ccf;
pub mod cli;
pub mod evalmap;
pub mod geodata;
pub mod pipeline;
pub mod synth;
