use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};

/// Per-class sizes of a source/target task drawn from two labelled pools.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub source_counts: Vec<usize>,
    pub target_counts: Vec<usize>,
    /// When set, the target test set is the largest subset of the remaining
    /// target pool with exactly the class ratio of `target_counts`.
    /// Otherwise every remaining target example is used.
    #[serde(default = "default_true")]
    pub test_matches_target_ratio: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

/// Labelled source, unlabelled target, and labelled target test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub source: LabeledDataset,
    pub target: UnlabeledDataset,
    pub test: LabeledDataset,
}

/// Pool indices chosen for each part of a task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSelection {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `total` into integer counts proportional to `priors` with the
/// largest-remainder method. Ties go to the lower class index.
pub fn largest_remainder_counts(total: usize, priors: &[f64]) -> Vec<usize> {
    let sum: f64 = priors.iter().sum();
    let exact: Vec<f64> = priors.iter().map(|p| p / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..priors.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// `max_i P_S(y=i) / P_T(y=i)`.
pub fn shift_degree(source_priors: &[f64], target_priors: &[f64]) -> Result<f64> {
    if source_priors.len() != target_priors.len() || source_priors.is_empty() {
        return Err(Error::contract("shift degree needs two priors of the same length"));
    }
    if let Some(i) = target_priors.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::contract(format!("target prior of class {i} is zero")));
    }
    Ok(source_priors
        .iter()
        .zip(target_priors)
        .map(|(s, t)| s / t)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn shuffled_by_class(pool: &LabeledDataset, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut by_class = pool.indices_by_class();
    for idx in &mut by_class {
        idx.shuffle(rng);
    }
    by_class
}

fn take(by_class: &mut [Vec<usize>], counts: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut picked = Vec::with_capacity(counts.iter().sum());
    for (class, (idx, &need)) in by_class.iter_mut().zip(counts).enumerate() {
        if idx.len() < need {
            return Err(Error::Capacity {
                class,
                needed: need,
                available: idx.len(),
            });
        }
        picked.extend(idx.drain(..need));
    }
    picked.shuffle(rng);
    Ok(picked)
}

fn check_counts(name: &str, counts: &[usize], classes: usize) -> Result<()> {
    if counts.len() != classes {
        return Err(Error::contract(format!(
            "{name} lists {} classes, pool has {classes}",
            counts.len()
        )));
    }
    if counts.contains(&0) {
        return Err(Error::contract(format!("{name} must be at least 1 per class")));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Chooses pool indices for a task; deterministic in `spec.seed`.
pub fn select_task_indices(
    source_pool: &LabeledDataset,
    target_pool: &LabeledDataset,
    spec: &TaskSpec,
) -> Result<TaskSelection> {
    if source_pool.num_classes() != target_pool.num_classes() {
        return Err(Error::contract(format!(
            "source pool has {} classes, target pool has {}",
            source_pool.num_classes(),
            target_pool.num_classes()
        )));
    }
    let classes = source_pool.num_classes();
    check_counts("source_counts", &spec.source_counts, classes)?;
    check_counts("target_counts", &spec.target_counts, classes)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut src = shuffled_by_class(source_pool, &mut rng);
    let source = take(&mut src, &spec.source_counts, &mut rng)?;
    let mut tgt = shuffled_by_class(target_pool, &mut rng);
    let target = take(&mut tgt, &spec.target_counts, &mut rng)?;

    let test_counts: Vec<usize> = if spec.test_matches_target_ratio {
        let g = spec.target_counts.iter().fold(0, |g, &c| gcd(g, c));
        let unit: Vec<usize> = spec.target_counts.iter().map(|c| c / g).collect();
        let copies = tgt
            .iter()
            .zip(&unit)
            .map(|(left, u)| left.len() / u)
            .min()
            .unwrap_or(0);
        if copies == 0 {
            let class = tgt.iter().zip(&unit).position(|(left, u)| left.len() < *u).unwrap_or(0);
            return Err(Error::Capacity {
                class,
                needed: spec.target_counts[class] + unit[class],
                available: spec.target_counts[class] + tgt[class].len(),
            });
        }
        unit.iter().map(|u| u * copies).collect()
    } else {
        tgt.iter().map(Vec::len).collect()
    };
    let test = take(&mut tgt, &test_counts, &mut rng)?;
    Ok(TaskSelection { source, target, test })
}

/// Draws the source set, the unlabelled target set, and a disjoint target
/// test set from two labelled pools.
pub fn build_task(source_pool: &LabeledDataset, target_pool: &LabeledDataset, spec: &TaskSpec) -> Result<Task> {
    let sel = select_task_indices(source_pool, target_pool, spec)?;
    Ok(Task {
        source: source_pool.subset(&sel.source),
        target: target_pool.subset(&sel.target).into_unlabeled(),
        test: target_pool.subset(&sel.test),
    })
}

/// Subsamples `total` examples whose class frequencies realize `priors`
/// (up to largest-remainder rounding).
pub fn resample_with_ratio(pool: &LabeledDataset, priors: &[f64], total: usize, seed: u64) -> Result<LabeledDataset> {
    if priors.len() != pool.num_classes() {
        return Err(Error::contract(format!(
            "{} priors for a pool with {} classes",
            priors.len(),
            pool.num_classes()
        )));
    }
    let counts = largest_remainder_counts(total, priors);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = shuffled_by_class(pool, &mut rng);
    let rows = take(&mut by_class, &counts, &mut rng)?;
    Ok(pool.subset(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SparseExample;
    use std::collections::HashSet;

    fn pool(counts: &[usize]) -> LabeledDataset {
        let mut examples = Vec::new();
        let mut labels = Vec::new();
        let mut id = 0u32;
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                // feature value encodes the pool row so subsets can be traced
                examples.push(SparseExample::new(vec![0], vec![id as f64 + 1.0]).unwrap());
                labels.push(c);
                id += 1;
            }
        }
        LabeledDataset::new(examples, labels, counts.len(), 1).unwrap()
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder_counts(1000, &[0.9, 0.1]), vec![900, 100]);
        assert_eq!(largest_remainder_counts(10, &[1.0 / 3.0; 3]), vec![4, 3, 3]);
        assert_eq!(largest_remainder_counts(7, &[0.5, 0.5]), vec![4, 3]);
        assert_eq!(largest_remainder_counts(0, &[0.5, 0.5]), vec![0, 0]);
        for total in 1..50 {
            assert_eq!(largest_remainder_counts(total, &[0.2, 0.3, 0.5]).iter().sum::<usize>(), total);
        }
    }

    #[test]
    fn shift_degree_examples() {
        assert_eq!(shift_degree(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 1.0);
        assert!((shift_degree(&[0.5, 0.5], &[0.75, 0.25]).unwrap() - 2.0).abs() < 1e-15);
        assert!(shift_degree(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        let mut prev = 0.0;
        for p in [0.5, 0.6, 0.7, 0.75, 0.8, 0.9] {
            let d = shift_degree(&[0.5, 0.5], &[p, 1.0 - p]).unwrap();
            assert!(d >= 1.0 && d >= prev);
            prev = d;
        }
    }

    #[test]
    fn binary_task_priors() {
        let (s, t) = (pool(&[1500, 1500]), pool(&[2500, 1500]));
        let spec = TaskSpec {
            source_counts: vec![1000, 1000],
            target_counts: vec![1500, 500],
            test_matches_target_ratio: true,
            seed: 4,
        };
        let task = build_task(&s, &t, &spec).unwrap();
        assert_eq!(task.source.priors(), vec![0.5, 0.5]);
        let hidden = task.target.oracle_labels().unwrap();
        assert_eq!(hidden.iter().filter(|&&y| y == 0).count(), 1500);
        assert_eq!(task.target.len(), 2000);
        // leftover 1000/1000 -> 1000/333 would break the ratio; 999/333 keeps 3:1
        assert_eq!(task.test.class_counts(), vec![999, 333]);
    }

    #[test]
    fn multiclass_task_priors() {
        let (s, t) = (pool(&[1200, 1200, 1200]), pool(&[800, 2000, 1500]));
        let spec = TaskSpec {
            source_counts: vec![1000, 1000, 1000],
            target_counts: vec![500, 1500, 1000],
            test_matches_target_ratio: true,
            seed: 1,
        };
        let task = build_task(&s, &t, &spec).unwrap();
        let hidden = task.target.oracle_labels().unwrap();
        let mut counts = [0usize; 3];
        hidden.iter().for_each(|&y| counts[y] += 1);
        assert_eq!(counts, [500, 1500, 1000]);
        let tc = task.test.class_counts();
        assert_eq!(tc, vec![166, 498, 332]);
    }

    #[test]
    fn selection_is_deterministic_and_disjoint() {
        let (s, t) = (pool(&[50, 50]), pool(&[80, 40]));
        let spec = TaskSpec {
            source_counts: vec![20, 20],
            target_counts: vec![30, 10],
            test_matches_target_ratio: false,
            seed: 9,
        };
        let a = select_task_indices(&s, &t, &spec).unwrap();
        let b = select_task_indices(&s, &t, &spec).unwrap();
        assert_eq!(a, b);
        let tr: HashSet<_> = a.target.iter().collect();
        assert!(a.test.iter().all(|i| !tr.contains(i)));
        assert_eq!(a.test.len(), 80);
        let other = select_task_indices(&s, &t, &TaskSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn capacity_error_names_class() {
        let (s, t) = (pool(&[10, 3]), pool(&[10, 10]));
        let spec = TaskSpec {
            source_counts: vec![5, 5],
            target_counts: vec![5, 5],
            test_matches_target_ratio: true,
            seed: 0,
        };
        match build_task(&s, &t, &spec) {
            Err(Error::Capacity { class: 1, needed: 5, available: 3 }) => {}
            other => panic!("{other:?}"),
        }
        let t_small = pool(&[5, 10]);
        let spec = TaskSpec { source_counts: vec![2, 2], ..spec };
        assert!(matches!(build_task(&s, &t_small, &spec), Err(Error::Capacity { class: 0, .. })));
    }

    #[test]
    fn resample_ratio() {
        let p = pool(&[1000, 1000]);
        let r = resample_with_ratio(&p, &[0.9, 0.1], 1000, 3).unwrap();
        assert_eq!(r.class_counts(), vec![900, 100]);
        assert_eq!(r, resample_with_ratio(&p, &[0.9, 0.1], 1000, 3).unwrap());
        let plain = resample_with_ratio(&p, &[0.5, 0.5], 200, 3).unwrap();
        assert_eq!(plain.class_counts(), vec![100, 100]);
        assert!(matches!(
            resample_with_ratio(&p, &[0.9, 0.1], 2000, 3),
            Err(Error::Capacity { class: 0, .. })
        ));
    }
}
