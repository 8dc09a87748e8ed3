//! Experiment runner: TOML configurations, validation, archived runs and plots.

pub mod archive;
pub mod config;
pub mod run;
pub mod svg;

pub use archive::{Manifest, Status};
pub use config::{estimate_cost, parse, validate, CostEstimate, Diagnostic, ExperimentConfig, Kind, Level};
pub use run::{plot_dir, run, RunError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const IO: i32 = 1;
}
