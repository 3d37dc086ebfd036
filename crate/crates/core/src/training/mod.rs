//! Optimiser, schedule, loss, and the epoch loop with the DTW cold start.

mod adam;
mod config;
mod data;
mod forecaster;
mod history;
mod loss;
mod schedule;
mod trainer;

pub use adam::Adam;
pub use config::TrainConfig;
pub use data::{SeriesContext, Splits, TrainingData};
pub use forecaster::{build_input, evaluate_origins, predict_origins, reindex, retrieve};
pub use history::{EpochRecord, TrainHistory};
pub use loss::{loss, mse_on_graph};
pub use schedule::lr_schedule;
pub use trainer::{retrieval_mode, train, TrainOutcome};
