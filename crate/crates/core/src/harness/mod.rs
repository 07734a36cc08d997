//! Experiment orchestration: configs, sweeps over (method, budget, seed),
//! scoring against exact test kernels, persistence and summaries.

mod config;
pub mod io;
mod methods;
mod presets;
mod report;
mod run;

pub use config::{DatasetSpec, ExperimentConfig, ModelKind, Sweep, SweepKey};
pub use methods::{Method, METHOD_NAMES};
pub use presets::{planted_rbf, planted_zz, preset, N_TEST, PRESET_NAMES, RBF_GAMMA};
pub use report::{anchor_concentration, format_table, report, summarize, write_summary_csv, SummaryRow};
pub use run::{
    evaluate, generate_problem, problem_for_seed, read_records, run_experiment, run_method, write_records,
    CellParams, ExperimentRecord, Problem, RecordAppender,
};
