//! The forecasting network.

mod checkpoint;
mod config;
mod input;
pub mod layers;
mod network;

pub use checkpoint::Checkpoint;
pub use config::{parse_kv, DecodeSource, EmbeddingPooling, Fusion, ModelConfig};
pub use input::{CalendarFeatures, ForecastInput, Segment};
pub use network::Model;
