//! Config-driven experiments: the variant comparison table, the prior-shift
//! sweep, the collapse trace, and their CSV output.
//!
//! A config is one JSON file:
//!
//! ```json
//! {
//!   "name": "gauss-0.9",
//!   "task": {"kind": "synthetic",
//!            "class_means": [[-1, -1], [1, 1]], "std_dev": 0.5,
//!            "source_priors": [0.5, 0.5], "target_priors": [0.9, 0.1],
//!            "n_source": 2000, "n_target": 2000, "n_test": 5000},
//!   "variants": ["SO", "CMD", "CMD++", "CMD*"],
//!   "train": {"alpha": 10, "epochs": 30, "report_best": false},
//!   "seeds": [1, 2, 3, 4, 5],
//!   "output": "results.csv",
//!   "sweep": {"target_priors": [[0.5, 0.5], [0.7, 0.3], [0.9, 0.1]]},
//!   "collapse": {"alpha": 10},
//!   "alpha_grid": [0.1, 1, 10]
//! }
//! ```
//!
//! `task.kind` is `synthetic`, `files` (`feature_dim`, `source`, `target`,
//! `test`) or `pools` (`feature_dim`, `source_pool`, `target_pool`,
//! `source_counts`, `target_counts`, `test_matches_target_ratio`). `train`
//! takes any [`TrainConfig`](crate::TrainConfig) field. Only `name`, `task`
//! and `variants` are required.
//!
//! Each seed draws its own task (synthetic sample or pool selection) and
//! seeds every run on it. Results are identical for any thread count.

mod config;
mod report;
mod runner;

pub use config::{
    materialize_task, parse_seeds, CollapseConfig, ExperimentConfig, SweepConfig, TaskSource, DEFAULT_COLLAPSE_ALPHA,
    DEFAULT_SEEDS,
};
pub use report::{mean, sample_std, CollapseRow, CollapseTable, ResultRow, ResultTable, SweepRow, SweepTable};
pub use runner::{run_collapse, run_sweep, run_train, RunOptions};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

/// Process exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Io(_) | Error::Parse { .. } | Error::Range { .. } | Error::Capacity { .. } => EXIT_DATA,
        _ => EXIT_OTHER,
    }
}
