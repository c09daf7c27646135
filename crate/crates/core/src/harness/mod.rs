//! Experiment grid, comparison report and the command-line front end.

pub mod cli;
mod grid;
mod report;

pub use grid::{
    load_records, run_grid, run_point, GridOptions, GridOutcome, GridPoint, GridSpec, RunRecord,
    BEST_CHECKPOINT_FILE, CHECKPOINT_FILE, ERROR_FILE, RECORD_FILE,
};
pub use report::{default_baselines, load_baselines, parse_baselines, render_report, Baseline};
