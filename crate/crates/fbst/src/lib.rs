//! Front end for the GP linear-model FBST: CSV data, TOML configuration,
//! the droplet experiment and report files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod runner;
pub mod stokes;

pub use config::{EpsilonSpec, ExperimentConfig, MeasureSpec, Overrides, Preset, ResolvedConfig};
pub use dataset::{load_dataset, parse_dataset, Dataset};
pub use error::{CliError, Result};
pub use runner::{run_custom, run_droplet, run_with_data, write_report, DomainAssumption, RunReport};
pub use stokes::{stokes_threshold, StokesParams, StokesThreshold};
