//! Relative improvement over the source-only model as the target prior moves
//! away from the source prior.

use wdirl::experiment::{run_sweep, ExperimentConfig, RunOptions};

fn main() -> wdirl::Result<()> {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "name": "sweep",
            "task": {"kind": "synthetic", "class_means": [[-1, -1], [1, 1]], "std_dev": 0.5,
                     "source_priors": [0.5, 0.5], "target_priors": [0.5, 0.5],
                     "n_source": 1000, "n_target": 1000, "n_test": 2000},
            "variants": ["SO", "CMD", "CMD++", "CMD*"],
            "train": {"alpha": 10, "epochs": 20, "report_best": false},
            "seeds": [1, 2],
            "sweep": {"target_priors": [[0.5, 0.5], [0.7, 0.3], [0.9, 0.1]]}
        }"#,
    )?;
    let table = run_sweep(&cfg, &RunOptions::default())?;
    print!("{}", table.to_csv());
    Ok(())
}
