use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{largest_remainder_counts, LabeledDataset, SparseExample, Task};
use crate::error::{Error, Result};

/// Isotropic Gaussian classes shared by both domains; only the class priors
/// differ between source and target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPairSpec {
    pub class_means: Vec<Vec<f64>>,
    /// Per-coordinate standard deviation.
    pub std_dev: f64,
    pub source_priors: Vec<f64>,
    pub target_priors: Vec<f64>,
    pub n_source: usize,
    pub n_target: usize,
    /// Size of the labelled target test set, drawn with the target priors.
    pub n_test: usize,
}

impl GaussianPairSpec {
    /// Two classes at (-1,-1) and (1,1) with σ = 0.5.
    pub fn binary(source_priors: [f64; 2], target_priors: [f64; 2], n_source: usize, n_target: usize) -> Self {
        Self {
            class_means: vec![vec![-1.0, -1.0], vec![1.0, 1.0]],
            std_dev: 0.5,
            source_priors: source_priors.to_vec(),
            target_priors: target_priors.to_vec(),
            n_source,
            n_target,
            n_test: n_target,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_classes();
        if l < 2 {
            return Err(Error::config("class_means", "need at least two classes"));
        }
        let d = self.dim();
        if d == 0 || self.class_means.iter().any(|m| m.len() != d) {
            return Err(Error::config("class_means", "means must share a nonzero dimension"));
        }
        if self.class_means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("class_means", "means must be finite"));
        }
        for i in 0..l {
            for j in i + 1..l {
                if self.class_means[i] == self.class_means[j] {
                    return Err(Error::config("class_means", format!("classes {i} and {j} share a mean")));
                }
            }
        }
        if !(self.std_dev > 0.0 && self.std_dev.is_finite()) {
            return Err(Error::config("std_dev", "must be positive"));
        }
        for (name, p) in [("source_priors", &self.source_priors), ("target_priors", &self.target_priors)] {
            if p.len() != l {
                return Err(Error::config(name, format!("expected {l} entries")));
            }
            if p.iter().any(|&v| !(v > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config(name, "must be positive and sum to 1"));
            }
        }
        for (name, n) in [("n_source", self.n_source), ("n_target", self.n_target), ("n_test", self.n_test)] {
            if n < l {
                return Err(Error::config(name, format!("must be at least {l}")));
            }
        }
        Ok(())
    }
}

fn sample(spec: &GaussianPairSpec, priors: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<LabeledDataset> {
    let counts = largest_remainder_counts(n, priors);
    let noise = Normal::new(0.0, spec.std_dev).expect("validated std_dev");
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let x = spec.class_means[class].iter().map(|m| m + noise.sample(rng)).collect();
            rows.push((x, class));
        }
    }
    rows.shuffle(rng);
    let (examples, labels): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .map(|(x, y)| (SparseExample::from_dense(&x), y))
        .unzip();
    LabeledDataset::new(examples, labels, spec.num_classes(), spec.dim())
}

/// Draws source, unlabelled target and target test sets. Class counts
/// follow the priors exactly up to largest-remainder rounding.
pub fn synth_gaussian_pair(spec: &GaussianPairSpec, seed: u64) -> Result<Task> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = sample(spec, &spec.source_priors, spec.n_source, &mut rng)?;
    let target = sample(spec, &spec.target_priors, spec.n_target, &mut rng)?.into_unlabeled();
    let test = sample(spec, &spec.target_priors, spec.n_test, &mut rng)?;
    Ok(Task { source, target, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shift_degree;

    #[test]
    fn exact_class_frequencies() {
        let spec = GaussianPairSpec::binary([0.5, 0.5], [0.9, 0.1], 1000, 1000);
        let task = synth_gaussian_pair(&spec, 7).unwrap();
        assert_eq!(task.source.class_counts(), vec![500, 500]);
        assert_eq!(task.test.class_counts(), vec![900, 100]);
        let hidden = task.target.oracle_labels().unwrap();
        assert_eq!(hidden.iter().filter(|&&y| y == 1).count(), 100);
        assert_eq!(task.source.feature_dim(), 2);
    }

    #[test]
    fn same_priors_have_no_shift() {
        let spec = GaussianPairSpec::binary([0.5, 0.5], [0.5, 0.5], 100, 100);
        let task = synth_gaussian_pair(&spec, 1).unwrap();
        assert_eq!(shift_degree(&task.source.priors(), &task.test.priors()).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = GaussianPairSpec::binary([0.5, 0.5], [0.75, 0.25], 200, 200);
        assert_eq!(synth_gaussian_pair(&spec, 3).unwrap(), synth_gaussian_pair(&spec, 3).unwrap());
        assert_ne!(synth_gaussian_pair(&spec, 3).unwrap(), synth_gaussian_pair(&spec, 4).unwrap());
    }

    #[test]
    fn class_conditionals_match_across_domains() {
        let spec = GaussianPairSpec::binary([0.5, 0.5], [0.5, 0.5], 4000, 4000);
        let task = synth_gaussian_pair(&spec, 11).unwrap();
        let target = task.target.dense();
        let hidden = task.target.oracle_labels().unwrap().to_vec();
        let source = task.source.dense();
        for class in 0..2 {
            let mean = |x: &crate::numkit::Matrix, labels: &[usize], d: usize| {
                let rows: Vec<_> = (0..x.rows()).filter(|&r| labels[r] == class).collect();
                let s: f64 = rows.iter().map(|&r| x.get(r, d)).sum();
                (s / rows.len() as f64, rows.len())
            };
            for d in 0..2 {
                let (ms, ns) = mean(&source, task.source.labels(), d);
                let (mt, nt) = mean(&target, &hidden, d);
                let n = ns.min(nt) as f64;
                assert!((ms - mt).abs() < 4.0 * spec.std_dev / n.sqrt(), "class {class} coord {d}");
                assert!((ms - spec.class_means[class][d]).abs() < 4.0 * spec.std_dev / n.sqrt());
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let good = GaussianPairSpec::binary([0.5, 0.5], [0.9, 0.1], 10, 10);
        let mut same_mean = good.clone();
        same_mean.class_means[1] = vec![-1.0, -1.0];
        let mut no_spread = good.clone();
        no_spread.std_dev = 0.0;
        let mut bad_prior = good.clone();
        bad_prior.target_priors = vec![0.9, 0.2];
        for spec in [same_mean, no_spread, bad_prior] {
            assert!(matches!(synth_gaussian_pair(&spec, 0), Err(Error::Config { .. })));
        }
    }
}
