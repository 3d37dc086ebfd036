//! Data ingestion, normalisation, metrics, synthetic data, and sweeps.

mod experiment;
mod metrics;
mod norm;
mod series;
mod sweep;
mod synth;

pub use experiment::{
    checkpoint, checkpoint_settings, forecast_next, run, test_metrics, train_run, Dataset,
    RunConfig, RunOutcome,
};
pub use metrics::{evaluate, Metrics};
pub use norm::NormStats;
pub use series::{ingest_csv, parse_csv, Series};
pub use sweep::{
    content_length_candidates, key_length_candidates, sweep, sweep_ablations, sweep_deployment,
    AblationReports, DeploymentReport, SweepReport, SweepRow, COLD_START_EPOCHS, KEY_LENGTHS,
    RETRIEVAL_COUNTS,
};
pub use synth::{gen_synthetic, MotifSpec};
