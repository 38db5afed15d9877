//! Files and command-line front end for `dsfa-core`: panel CSV ingestion,
//! TOML run configs, result exports with manifests, evaluation tables and
//! heatmap slices.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod export;
pub mod format;
pub mod heatmap;
pub mod manifest;
pub mod panel_io;
pub mod truth;

pub use config::{load_config, parse_config, RunConfig};
pub use error::{Error, Result};
pub use export::{read_fit_bundle, write_fit_bundle, FitBundle};
pub use panel_io::{load_panel, PanelOptions};
