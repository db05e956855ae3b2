//! Declarative experiment runner: a TOML spec in, a directory of CSV and
//! JSON artifacts with a checksummed manifest out.

pub mod error;
pub mod manifest;
pub mod report;
pub mod run;
pub mod spec;

pub use error::CliError;
pub use manifest::{FileEntry, Manifest};
pub use run::{load_spec, run_experiment, RunOptions};
pub use spec::{ExperimentSpec, Kind};
