//! Monte-Carlo experiment harness.

pub mod config;
pub mod experiment;
pub mod output;
pub mod seed;
pub mod trial;

pub use config::{ApSpacing, ChannelProfile, Dims, ExperimentConfig, ExperimentKind, SweepPoint};
pub use experiment::{aggregate, mean_stderr, mean_stderr_db, run_experiment, AggregateRow, ExperimentRun, TrialFailure};
pub use output::{csv_string, metadata_json, write_outputs, CSV_HEADER};
pub use trial::{estimate_channels, nmse_g_db, nmse_h_db, run_trial, scheme_rates, PipelineEstimates, Scheme, SchemeRates, TrialRecord};
