use rayon::prelude::*;

use super::config::{materialize_task, ExperimentConfig, TaskSource, DEFAULT_SEEDS};
use super::report::{CollapseRow, CollapseTable, ResultRow, ResultTable, SweepRow, SweepTable};
use crate::classweight::ClassWeight;
use crate::data::shift_degree;
use crate::error::{Error, Result};
use crate::model::{initial_weight_from, train_with_initial_weight, RunRecord, TrainConfig, Variant, WeightInit, Weighting};

/// Execution settings that do not change results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl RunOptions {
    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(job()),
            Some(0) => Err(Error::config("threads", "must be at least 1")),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::config("threads", e.to_string()))?;
                Ok(pool.install(job))
            }
        }
    }
}

/// A task plus training template evaluated for every variant and seed.
#[derive(Clone, Debug)]
struct Point {
    label: String,
    task: TaskSource,
    template: TrainConfig,
}

/// Runs of one point: `runs[v][s]` for variant `v` and seed `s`.
struct PointRuns {
    shift_degree: f64,
    runs: Vec<Vec<RunRecord>>,
}

/// All variants for one seed on one freshly built task. The source-only run
/// doubles as the weight initialiser of learned-weight variants whenever the
/// two would be identical.
fn run_seed(point: &Point, variants: &[Variant], seed: u64) -> Result<(f64, Vec<RunRecord>)> {
    let task = materialize_task(&point.task, seed)?;
    let shift = shift_degree(&task.source.priors(), &task.test.priors())?;
    let template = point.template.with_seed(seed);
    let (ds, dt, test) = (&task.source, &task.target, &task.test);

    let needs_init = template.w_init == WeightInit::SourceOnly
        && variants.iter().any(|v| v.weighting() == Weighting::Learned);
    let init_epochs = template.w_init_epochs.unwrap_or(template.epochs);
    let so_cfg = template.with_variant(Variant::So);
    let so_main = if variants.contains(&Variant::So) {
        Some(train_with_initial_weight(&so_cfg, ds, dt, test, None)?)
    } else {
        None
    };
    let initial: Option<ClassWeight> = if !needs_init {
        None
    } else if let (Some((state, _)), true) = (&so_main, init_epochs == template.epochs) {
        Some(initial_weight_from(state, ds, dt)?)
    } else {
        let pre = TrainConfig {
            epochs: init_epochs,
            ..so_cfg.clone()
        };
        let (state, _) = train_with_initial_weight(&pre, ds, dt, test, None)?;
        Some(initial_weight_from(&state, ds, dt)?)
    };

    let records = variants
        .par_iter()
        .map(|&v| {
            if v == Variant::So {
                return Ok(so_main.as_ref().expect("trained above").1.clone());
            }
            let init = (v.weighting() == Weighting::Learned).then(|| initial.clone()).flatten();
            train_with_initial_weight(&template.with_variant(v), ds, dt, test, init).map(|(_, r)| r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((shift, records))
}

fn run_points(points: &[Point], variants: &[Variant], seeds: &[u64], opts: &RunOptions) -> Result<Vec<PointRuns>> {
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results = opts.install(|| {
        jobs.par_iter()
            .map(|&(p, s)| run_seed(&points[p], variants, s))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut out = Vec::with_capacity(points.len());
    let mut it = results.into_iter();
    for _ in points {
        let mut runs = vec![Vec::with_capacity(seeds.len()); variants.len()];
        let mut shift = 0.0;
        for s in 0..seeds.len() {
            let (d, records) = it.next().expect("one result per job");
            if s == 0 {
                shift = d;
            }
            for (v, r) in records.into_iter().enumerate() {
                runs[v].push(r);
            }
        }
        out.push(PointRuns {
            shift_degree: shift,
            runs,
        });
    }
    Ok(out)
}

fn seeds_or_default(cfg: &ExperimentConfig) -> Vec<u64> {
    if cfg.seeds.is_empty() {
        DEFAULT_SEEDS.to_vec()
    } else {
        cfg.seeds.clone()
    }
}

/// Every variant on the configured task, once per alpha of `alpha_grid`
/// when set.
pub fn run_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultTable> {
    cfg.validate()?;
    let points: Vec<Point> = match &cfg.alpha_grid {
        None => vec![Point {
            label: cfg.name.clone(),
            task: cfg.task.clone(),
            template: cfg.train.clone(),
        }],
        Some(grid) => grid
            .iter()
            .map(|&alpha| Point {
                label: format!("{}[alpha={alpha}]", cfg.name),
                task: cfg.task.clone(),
                template: TrainConfig {
                    alpha,
                    ..cfg.train.clone()
                },
            })
            .collect(),
    };
    let seeds = seeds_or_default(cfg);
    let results = run_points(&points, &cfg.variants, &seeds, opts)?;
    let mut rows = Vec::new();
    for (point, pr) in points.iter().zip(results) {
        for (&variant, runs) in cfg.variants.iter().zip(pr.runs) {
            rows.push(ResultRow {
                task: point.label.clone(),
                variant,
                seeds: seeds.clone(),
                accuracies: runs.iter().map(RunRecord::reported_accuracy).collect(),
                final_w: runs.iter().map(|r| r.final_w.clone()).collect(),
                shift_degree: pr.shift_degree,
            });
        }
    }
    Ok(ResultTable { rows })
}

/// Relative improvement over `SO` at every grid point of `sweep`.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepTable> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "sweep-shift needs a `sweep.target_priors` grid"))?;
    let mut variants = vec![Variant::So];
    variants.extend(cfg.variants.iter().copied().filter(|&v| v != Variant::So));
    let points = sweep
        .target_priors
        .iter()
        .map(|p| {
            Ok(Point {
                label: cfg.name.clone(),
                task: cfg.with_target_priors(p)?,
                template: cfg.train.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seeds = seeds_or_default(cfg);
    let results = run_points(&points, &variants, &seeds, opts)?;
    let mut rows = Vec::new();
    for ((point, priors), pr) in points.iter().zip(&sweep.target_priors).zip(results) {
        let means: Vec<f64> = pr
            .runs
            .iter()
            .map(|runs| super::report::mean(&runs.iter().map(RunRecord::reported_accuracy).collect::<Vec<_>>()))
            .collect();
        for (&variant, &mean_acc) in variants.iter().zip(&means) {
            rows.push(SweepRow {
                task: point.label.clone(),
                target_priors: priors.clone(),
                shift_degree: pr.shift_degree,
                variant,
                mean_acc,
                so_mean_acc: means[0],
            });
        }
    }
    Ok(SweepTable { rows })
}

/// Per-epoch traces at the collapse alpha on a synthetic task.
pub fn run_collapse(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<CollapseTable> {
    cfg.validate()?;
    if !matches!(cfg.task, TaskSource::Synthetic(_)) {
        return Err(Error::config("task", "collapse-demo needs a synthetic task"));
    }
    let alpha = cfg.collapse.clone().unwrap_or_default().alpha;
    let point = Point {
        label: cfg.name.clone(),
        task: cfg.task.clone(),
        template: TrainConfig {
            alpha,
            ..cfg.train.clone()
        },
    };
    let seeds = seeds_or_default(cfg);
    let pr = run_points(std::slice::from_ref(&point), &cfg.variants, &seeds, opts)?
        .pop()
        .expect("one point");
    let mut rows = Vec::new();
    for (&variant, runs) in cfg.variants.iter().zip(pr.runs) {
        for run in runs {
            for record in run.epochs {
                rows.push(CollapseRow {
                    variant,
                    seed: run.seed,
                    record,
                });
            }
        }
    }
    Ok(CollapseTable {
        num_classes: cfg.num_classes(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_gaussian_pair, GaussianPairSpec};
    use crate::model::train;

    fn config(variants: Vec<Variant>) -> ExperimentConfig {
        ExperimentConfig {
            name: "toy".into(),
            task: TaskSource::Synthetic(GaussianPairSpec::binary([0.5, 0.5], [0.8, 0.2], 120, 120)),
            variants,
            train: TrainConfig {
                epochs: 2,
                batch_size: 32,
                hidden_dim: 6,
                disc_hidden: 4,
                ..TrainConfig::default()
            },
            seeds: vec![3, 4],
            output: None,
            sweep: None,
            collapse: None,
            alpha_grid: None,
        }
    }

    #[test]
    fn shared_source_only_init_matches_standalone_training() {
        let cfg = config(vec![Variant::So, Variant::CmdCorrected, Variant::DannWeighted]);
        let table = run_train(&cfg, &RunOptions::default()).unwrap();
        let TaskSource::Synthetic(spec) = &cfg.task else { unreachable!() };
        for (i, &seed) in cfg.seeds.iter().enumerate() {
            let task = synth_gaussian_pair(spec, seed).unwrap();
            for v in &cfg.variants {
                let run_cfg = cfg.train.with_variant(*v).with_seed(seed);
                let (_, rec) = train(&run_cfg, &task.source, &task.target, &task.test).unwrap();
                let row = table.row("toy", *v).unwrap();
                assert_eq!(row.accuracies[i], rec.reported_accuracy());
                assert_eq!(row.final_w[i], rec.final_w);
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let cfg = config(vec![Variant::So, Variant::Cmd]);
        let one = run_train(&cfg, &RunOptions { threads: Some(1) }).unwrap();
        let two = run_train(&cfg, &RunOptions { threads: Some(2) }).unwrap();
        assert_eq!(one.to_csv(), two.to_csv());
        assert!(run_train(&cfg, &RunOptions { threads: Some(0) }).is_err());
    }

    #[test]
    fn sweep_always_includes_source_only() {
        let mut cfg = config(vec![Variant::Cmd]);
        cfg.sweep = Some(super::super::config::SweepConfig {
            target_priors: vec![vec![0.5, 0.5], vec![0.8, 0.2]],
        });
        let t = run_sweep(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.curve(Variant::So).iter().map(|r| r.rel_improvement()).collect::<Vec<_>>(), [0.0, 0.0]);
        assert!(t.rows[0].shift_degree < t.rows[2].shift_degree);
    }

    #[test]
    fn collapse_trace_shape() {
        let cfg = config(vec![Variant::So, Variant::Cmd]);
        let t = run_collapse(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 2 * 2 * 2);
        let csv = t.to_csv();
        assert!(csv.starts_with("variant,seed,epoch,majority_fraction,target_acc,sup_loss,inv_loss,mass_0,mass_1\n"));
        assert_eq!(t.mean_majority_fraction(Variant::Cmd).len(), 2);
    }
}
