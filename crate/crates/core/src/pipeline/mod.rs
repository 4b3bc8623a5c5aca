//! Experiment configuration, k-fold model selection and the end-to-end run.

mod config;
mod cv;
mod experiment;

pub use config::{parse_feature_sets, ExperimentConfig, GridConfig, RvrSolverConfig, SvrSolverConfig};
pub use cv::{grid_search, grid_search_observed, kfold_split, CellResult, CvObserver, CvResult, LeakageCounter};
pub use experiment::{
    evaluate_saved, run_experiment, run_experiment_observed, write_bundle, ExperimentOutcome, ModelOutcome,
    GROUPS, REPORT_FORMAT_VERSION,
};
