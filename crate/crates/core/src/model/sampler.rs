use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::largest_remainder_counts;

/// Per-class batch sizes proportional to `class_counts`, at least one per
/// class. Needs `batch_size >= class_counts.len()`.
pub fn stratified_counts(batch_size: usize, class_counts: &[usize]) -> Vec<usize> {
    let weights: Vec<f64> = class_counts.iter().map(|&c| c as f64).collect();
    let mut counts = largest_remainder_counts(batch_size, &weights);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let largest = (0..counts.len()).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
        counts[largest] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Endless shuffled pass over a fixed index list.
#[derive(Clone, Debug)]
struct Cycle {
    order: Vec<usize>,
    pos: usize,
}

impl Cycle {
    fn new(order: Vec<usize>) -> Self {
        let pos = order.len();
        Self { order, pos }
    }

    fn take<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R, out: &mut Vec<usize>) {
        for _ in 0..n {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
    }
}

/// Source batches laid out as contiguous class blocks, class 0 first, so
/// per-class statistics can be taken from row slices.
#[derive(Clone, Debug)]
pub struct StratifiedSampler {
    classes: Vec<Cycle>,
    counts: Vec<usize>,
}

impl StratifiedSampler {
    /// `labels` must contain every class below `num_classes`.
    pub fn new(labels: &[usize], num_classes: usize, batch_size: usize) -> Self {
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
        assert!(sizes.iter().all(|&s| s > 0), "every class needs an example");
        Self {
            counts: stratified_counts(batch_size, &sizes),
            classes: by_class.into_iter().map(Cycle::new).collect(),
        }
    }

    /// Rows drawn from each class per batch.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.counts.iter().sum());
        for (cycle, &n) in self.classes.iter_mut().zip(&self.counts) {
            cycle.take(n, rng, &mut rows);
        }
        rows
    }
}

/// Uniform batches over the target set without replacement within a pass.
#[derive(Clone, Debug)]
pub struct TargetSampler {
    cycle: Cycle,
    batch_size: usize,
}

impl TargetSampler {
    pub fn new(len: usize, batch_size: usize) -> Self {
        Self {
            cycle: Cycle::new((0..len).collect()),
            batch_size,
        }
    }

    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.batch_size);
        self.cycle.take(self.batch_size, rng, &mut rows);
        rows
    }
}
