use std::collections::HashSet;

use proptest::prelude::*;

use wdirl::classweight::{adjust_posterior, init_from_source_only, true_weight};
use wdirl::data::{largest_remainder_counts, select_task_indices, shift_degree, LabeledDataset, TaskSpec};
use wdirl::experiment::{ResultRow, ResultTable};
use wdirl::losses::{adversarial_loss_d, cmd, weighted_adversarial_loss_d, weighted_cmd, IntervalBounds};
use wdirl::model::stratified_counts;
use wdirl::numkit::{ParamId, Tape};
use wdirl::{Matrix, Variant};

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(lo..hi, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

fn distribution(classes: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, classes).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// Row-stochastic matrix with `cols` columns.
fn posterior(cols: usize) -> impl Strategy<Value = Matrix> {
    (1usize..20).prop_flat_map(move |r| {
        prop::collection::vec(0.01f64..1.0, r * cols).prop_map(move |d| {
            let mut m = Matrix::new(r, cols, d).unwrap();
            for i in 0..r {
                let row = m.row_mut(i);
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
            m
        })
    })
}

fn argmax(row: &[f64]) -> usize {
    Matrix::row_vector(row).argmax_rows()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_positive_distributions(x in matrix(1..8, 1..8, -30.0, 30.0)) {
        let mut t = Tape::new();
        let n = t.constant(x);
        let s = t.softmax_rows(n);
        for row in t.value(s).iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn grad_reversal_forward_is_bit_identical(x in matrix(1..6, 1..6, -2.0, 2.0), lambda in 0.0f64..5.0) {
        let mut t = Tape::new();
        let n = t.param(ParamId(0), x.clone());
        let r = t.grad_reversal(n, lambda).unwrap();
        prop_assert_eq!(t.value(r), &x);
    }

    #[test]
    fn matmul_matches_triple_loop(
        (a, b) in (1usize..=16, 1usize..=16, 1usize..=16).prop_flat_map(|(n, k, m)| (
            prop::collection::vec(-2.0f64..2.0, n * k).prop_map(move |d| Matrix::new(n, k, d).unwrap()),
            prop::collection::vec(-2.0f64..2.0, k * m).prop_map(move |d| Matrix::new(k, m, d).unwrap()),
        ))
    ) {
        let c = a.matmul(&b).unwrap();
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for l in 0..a.cols() {
                    s += a.get(i, l) * b.get(l, j);
                }
                prop_assert!((c.get(i, j) - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cmd_is_symmetric_nonnegative_and_zero_on_equal_inputs(
        (s, t) in (1usize..5).prop_flat_map(|d| (
            matrix(2..30, d..d + 1, 0.0, 1.0),
            matrix(2..30, d..d + 1, 0.0, 1.0),
        )),
        k in 1usize..=6,
    ) {
        let u = IntervalBounds::unit();
        let st = cmd(&s, &t, k, u).unwrap();
        prop_assert!(st >= 0.0);
        prop_assert!((st - cmd(&t, &s, k, u).unwrap()).abs() <= 1e-12);
        prop_assert!(cmd(&s, &s, k, u).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn unit_weights_with_empirical_priors_reduce_to_pooled_losses(
        sizes in prop::collection::vec(1usize..15, 2..4),
        d in 1usize..4,
        k in 1usize..=6,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut unit = |r: usize, c: usize| Matrix::new(r, c, (0..r * c).map(|_| rng.random::<f64>()).collect()).unwrap();
        let blocks: Vec<Matrix> = sizes.iter().map(|&n| unit(n, d)).collect();
        let target = unit(9, d);
        let total: usize = sizes.iter().sum();
        let priors: Vec<f64> = sizes.iter().map(|&n| n as f64 / total as f64).collect();
        let ones = vec![1.0; sizes.len()];
        let pooled = Matrix::vstack(&blocks.iter().collect::<Vec<_>>()).unwrap();
        let u = IntervalBounds::unit();
        let w = weighted_cmd(&blocks, &priors, &ones, &target, k, u).unwrap();
        prop_assert!((w - cmd(&pooled, &target, k, u).unwrap()).abs() <= 1e-10);

        let ds: Vec<Vec<f64>> = blocks.iter().map(|b| b.data().iter().map(|v| 0.01 + 0.98 * v).collect()).collect();
        let dt: Vec<f64> = target.data().iter().map(|v| 0.01 + 0.98 * v).collect();
        let weighted = weighted_adversarial_loss_d(&ds, &priors, &ones, &dt).unwrap();
        prop_assert!((weighted - adversarial_loss_d(&ds.concat(), &dt).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn uniform_weights_preserve_argmax(p in (2usize..5).prop_flat_map(posterior), c in 0.1f64..10.0) {
        let w = vec![c; p.cols()];
        let adjusted = adjust_posterior(&p, &w).unwrap();
        prop_assert_eq!(adjusted.argmax_rows(), p.argmax_rows());
        for row in adjusted.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn correction_only_moves_rows_whose_weighted_argmax_differs(
        (p, w) in (2usize..5).prop_flat_map(|l| (posterior(l), prop::collection::vec(0.05f64..5.0, l))),
    ) {
        let adjusted = adjust_posterior(&p, &w).unwrap().argmax_rows();
        for (r, row) in p.iter_rows().enumerate() {
            let weighted: Vec<f64> = row.iter().zip(&w).map(|(a, b)| a * b).collect();
            if argmax(&weighted) == argmax(row) {
                prop_assert_eq!(adjusted[r], argmax(row));
            }
        }
    }

    #[test]
    fn source_only_init_is_invariant_to_duplicating_the_target(
        p in (2usize..4).prop_flat_map(posterior),
        extra in prop::collection::vec(0usize..4, 0..10),
    ) {
        let l = p.cols();
        let mut labels: Vec<usize> = (0..l).collect();
        labels.extend(extra.iter().map(|&y| y % l));
        let once = init_from_source_only(&p, &labels).unwrap().materialize();
        let twice = init_from_source_only(&Matrix::vstack(&[&p, &p]).unwrap(), &labels).unwrap().materialize();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn true_weight_is_a_likelihood_ratio(src in distribution(2..6), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = src.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let tgt: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let w = true_weight(&src, &tgt).unwrap();
        let mass: f64 = w.iter().zip(&src).map(|(a, b)| a * b).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-15);
        prop_assert!(shift_degree(&src, &tgt).unwrap() >= 1.0);
        prop_assert!((shift_degree(&src, &src).unwrap() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn largest_remainder_counts_are_exact(total in 0usize..5000, p in distribution(1..7)) {
        let counts = largest_remainder_counts(total, &p);
        prop_assert_eq!(counts.iter().sum::<usize>(), total);
        for (c, q) in counts.iter().zip(&p) {
            prop_assert!((*c as f64 - q * total as f64).abs() < 1.0);
        }
    }

    #[test]
    fn stratified_batches_cover_every_class(
        sizes in prop::collection::vec(1usize..1000, 1..6),
        extra in 0usize..300,
    ) {
        let batch = sizes.len() + extra;
        let counts = stratified_counts(batch, &sizes);
        prop_assert_eq!(counts.iter().sum::<usize>(), batch);
        prop_assert!(counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn task_selection_is_deterministic_disjoint_and_exact(
        src in prop::collection::vec(1usize..30, 2..4),
        seed in any::<u64>(),
    ) {
        let classes = src.len();
        let pool_labels: Vec<usize> = (0..classes).flat_map(|c| vec![c; 60]).collect();
        let x = Matrix::new(pool_labels.len(), 1, (0..pool_labels.len()).map(|i| i as f64).collect()).unwrap();
        let pool = LabeledDataset::from_dense(&x, pool_labels.clone(), classes).unwrap();
        let target_counts: Vec<usize> = (0..classes).map(|c| 5 + 5 * c).collect();
        let spec = TaskSpec {
            source_counts: src.clone(),
            target_counts: target_counts.clone(),
            test_matches_target_ratio: true,
            seed,
        };
        let a = select_task_indices(&pool, &pool, &spec).unwrap();
        prop_assert_eq!(&a, &select_task_indices(&pool, &pool, &spec).unwrap());
        let target: HashSet<usize> = a.target.iter().copied().collect();
        prop_assert!(a.test.iter().all(|i| !target.contains(i)));
        let count = |rows: &[usize], c: usize| rows.iter().filter(|&&r| pool_labels[r] == c).count();
        for c in 0..classes {
            prop_assert_eq!(count(&a.source, c), src[c]);
            prop_assert_eq!(count(&a.target, c), target_counts[c]);
            // test ratio equals the target ratio exactly
            prop_assert_eq!(count(&a.test, c) * target_counts[0], count(&a.test, 0) * target_counts[c]);
        }
    }

    #[test]
    fn table_means_match_their_seed_columns(accs in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let row = ResultRow {
            task: "t".into(),
            variant: Variant::CmdCorrected,
            seeds: (0..accs.len() as u64).collect(),
            accuracies: accs.clone(),
            final_w: vec![vec![1.0, 1.0]; accs.len()],
            shift_degree: 1.0,
        };
        let direct = accs.iter().sum::<f64>() / accs.len() as f64;
        prop_assert!((row.mean_acc() - direct).abs() <= 1e-12);
        prop_assert!(row.std_acc() >= 0.0);
        let csv = ResultTable { rows: vec![row] }.to_csv();
        let mean_field: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        prop_assert!((mean_field - direct).abs() <= 5e-7);
    }
}
