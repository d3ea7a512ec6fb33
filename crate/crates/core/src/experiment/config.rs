use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    build_task, largest_remainder_counts, load_labeled, load_unlabeled, synth_gaussian_pair, GaussianPairSpec, Task,
    TaskSpec,
};
use crate::error::{Error, Result};
use crate::model::{TrainConfig, Variant};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_COLLAPSE_ALPHA: f64 = 10.0;

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

/// Where the source, target and test sets come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSource {
    /// Gaussian class-conditionals with shifted priors, regenerated per seed.
    Synthetic(GaussianPairSpec),
    /// Pre-split sparse files. The target file may carry labels; they are
    /// kept only as oracle labels.
    Files {
        feature_dim: usize,
        source: PathBuf,
        target: PathBuf,
        test: PathBuf,
    },
    /// Labelled pools subsampled to fixed per-class counts, reselected per
    /// seed.
    Pools {
        feature_dim: usize,
        source_pool: PathBuf,
        target_pool: PathBuf,
        source_counts: Vec<usize>,
        target_counts: Vec<usize>,
        #[serde(default = "yes")]
        test_matches_target_ratio: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Target prior vectors, one grid point each.
    pub target_priors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    #[serde(default = "collapse_alpha")]
    pub alpha: f64,
}

fn collapse_alpha() -> f64 {
    DEFAULT_COLLAPSE_ALPHA
}

impl Default for CollapseConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_COLLAPSE_ALPHA,
        }
    }
}

/// One experiment file. Relative paths resolve against the file's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskSource,
    pub variants: Vec<Variant>,
    /// Template for every run; `variant` and `seed` are overwritten.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub collapse: Option<CollapseConfig>,
    /// When set, `train` repeats every variant once per alpha.
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates `path`, resolving relative data paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.task {
            TaskSource::Synthetic(_) => {}
            TaskSource::Files {
                source, target, test, ..
            } => {
                fix(source);
                fix(target);
                fix(test);
            }
            TaskSource::Pools {
                source_pool,
                target_pool,
                ..
            } => {
                fix(source_pool);
                fix(target_pool);
            }
        }
        if let Some(out) = &mut self.output {
            fix(out);
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.task {
            TaskSource::Synthetic(spec) => spec.num_classes(),
            TaskSource::Pools { source_counts, .. } => source_counts.len(),
            // known only after loading; training validates again
            TaskSource::Files { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "list at least one variant"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "list at least one seed"));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        let classes = self.num_classes();
        match &self.task {
            TaskSource::Synthetic(spec) => spec.validate()?,
            TaskSource::Files { feature_dim, .. } | TaskSource::Pools { feature_dim, .. } if *feature_dim == 0 => {
                return Err(Error::config("task.feature_dim", "must be at least 1"));
            }
            TaskSource::Pools {
                source_counts,
                target_counts,
                ..
            } => {
                if source_counts.len() < 2 || source_counts.len() != target_counts.len() {
                    return Err(Error::config(
                        "task.target_counts",
                        "source and target counts need the same number (>= 2) of classes",
                    ));
                }
                if source_counts.iter().chain(target_counts).any(|&c| c == 0) {
                    return Err(Error::config("task.source_counts", "every class needs at least one example"));
                }
            }
            TaskSource::Files { .. } => {}
        }
        self.train.validate(classes)?;
        if let Some(sweep) = &self.sweep {
            if sweep.target_priors.is_empty() {
                return Err(Error::config("sweep.target_priors", "list at least one prior vector"));
            }
            if matches!(self.task, TaskSource::Files { .. }) {
                return Err(Error::config("sweep", "a prior sweep needs a synthetic or pools task"));
            }
            for p in &sweep.target_priors {
                check_priors("sweep.target_priors", p, classes)?;
            }
        }
        if let Some(c) = &self.collapse {
            if !(c.alpha >= 0.0 && c.alpha.is_finite()) {
                return Err(Error::config("collapse.alpha", "must be finite and >= 0"));
            }
        }
        if let Some(grid) = &self.alpha_grid {
            if grid.is_empty() || grid.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                return Err(Error::config("alpha_grid", "list finite values >= 0"));
            }
        }
        Ok(())
    }

    /// The configured task with its target priors replaced.
    pub fn with_target_priors(&self, priors: &[f64]) -> Result<TaskSource> {
        check_priors("target_priors", priors, self.num_classes())?;
        Ok(match &self.task {
            TaskSource::Synthetic(spec) => TaskSource::Synthetic(GaussianPairSpec {
                target_priors: priors.to_vec(),
                ..spec.clone()
            }),
            TaskSource::Pools {
                feature_dim,
                source_pool,
                target_pool,
                source_counts,
                target_counts,
                test_matches_target_ratio,
            } => TaskSource::Pools {
                feature_dim: *feature_dim,
                source_pool: source_pool.clone(),
                target_pool: target_pool.clone(),
                source_counts: source_counts.clone(),
                target_counts: largest_remainder_counts(target_counts.iter().sum(), priors),
                test_matches_target_ratio: *test_matches_target_ratio,
            },
            TaskSource::Files { .. } => {
                return Err(Error::config("sweep", "a prior sweep needs a synthetic or pools task"));
            }
        })
    }
}

fn check_priors(field: &str, p: &[f64], classes: usize) -> Result<()> {
    if p.len() != classes {
        return Err(Error::config(field, format!("expected {classes} priors, got {}", p.len())));
    }
    if p.iter().any(|&v| !(v > 0.0 && v < 1.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(field, format!("{p:?} is not a strictly positive distribution")));
    }
    Ok(())
}

/// Best guess at the offending field from a serde message.
fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`').nth(1).map_or_else(|| "config".to_string(), str::to_string)
}

/// Parses `"1,2,3"`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::config("seeds", format!("`{s}` is not a seed")))
        })
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::config("seeds", "list at least one seed"));
    }
    Ok(seeds)
}

/// Builds the task for one seed. Synthetic data and pool selections are
/// drawn with `seed`; pre-split files ignore it.
pub fn materialize_task(source: &TaskSource, seed: u64) -> Result<Task> {
    match source {
        TaskSource::Synthetic(spec) => synth_gaussian_pair(spec, seed),
        TaskSource::Files {
            feature_dim,
            source,
            target,
            test,
        } => Ok(Task {
            source: load_labeled(source, *feature_dim)?,
            target: load_unlabeled(target, *feature_dim)?,
            test: load_labeled(test, *feature_dim)?,
        }),
        TaskSource::Pools {
            feature_dim,
            source_pool,
            target_pool,
            source_counts,
            target_counts,
            test_matches_target_ratio,
        } => {
            let s = load_labeled(source_pool, *feature_dim)?;
            let t = load_labeled(target_pool, *feature_dim)?;
            let spec = TaskSpec {
                source_counts: source_counts.clone(),
                target_counts: target_counts.clone(),
                test_matches_target_ratio: *test_matches_target_ratio,
                seed,
            };
            build_task(&s, &t, &spec)
        }
    }
}
