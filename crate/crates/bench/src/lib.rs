//! Runs experiments with the `lifelong-core` agents: JSON configs, seeded
//! runs and parallel sweeps, CSV/JSON export and the property suite.

pub mod config;
pub mod experiment;
pub mod export;
pub mod sweep;
pub mod verify;

pub use config::{ExperimentConfig, SweepAxes};
pub use experiment::{environment, run_experiment, run_observed, InstantClock};
pub use export::{export_run, read_rows, write_rows, SummaryDocument, CSV_HEADER};
pub use sweep::{sweep, SweepRow};
pub use verify::{verify_properties, PropertyReport, PropertyResult};
