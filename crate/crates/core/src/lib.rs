//! Retrieval-augmented univariate time-series forecasting.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: dense tensors and a reverse-mode tape.
//! - [`dtw`]: dynamic-time-warping distance.
//! - [`tskb`]: the sliced (K, V) knowledge base and its retrieval scans.
//! - [`model`]: embedding, transformer encoder, and the dual cross-attention decoder.
//! - [`training`]: Adam, learning-rate schedule, loss, and the cold-start training loop.
//! - [`pipeline`]: series ingest, normalisation, metrics, synthetic data, and sweeps.

pub mod dtw;
pub mod error;
pub mod exec;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod training;
pub mod tskb;

pub use error::{Error, Result};
pub use exec::Execution;
