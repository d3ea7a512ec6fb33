//! Central finite-difference checks of every differentiable tape op, the
//! four invariance losses, each network layer, and the full training
//! objective of every variant.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classweight::ClassWeight;
use crate::error::Result;
use crate::losses::{graph, IntervalBounds, MixtureCentering};
use crate::model::{forward_encode, params, record_objective, Architecture, Family, ModelState, StepBatch, TrainConfig, Variant, Weighting};
use crate::numkit::{Matrix, NodeId, ParamId, Tape, LOG_EPS};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_CONFIGS: usize = 20;
/// Denominator floor of the relative error, so entries whose true gradient
/// is zero are compared on an absolute scale. Scaled by `max(1, |f|)`
/// because central-difference roundoff grows with the function value.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Largest relative error between `grad(inputs)` and central differences
/// of `value` over every entry of every input.
pub fn check_with(
    inputs: &[Matrix],
    value: impl Fn(&[Matrix]) -> Result<f64>,
    grad: impl Fn(&[Matrix]) -> Result<Vec<Matrix>>,
    step: f64,
) -> Result<f64> {
    let analytic = grad(inputs)?;
    let floor = REL_FLOOR * value(inputs)?.abs().max(1.0);
    let mut probe = inputs.to_vec();
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let x = input.data()[j];
            probe[i].data_mut()[j] = x + step;
            let up = value(&probe)?;
            probe[i].data_mut()[j] = x - step;
            let down = value(&probe)?;
            probe[i].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(analytic[i].data()[j], numeric, floor));
        }
    }
    Ok(worst)
}

/// Registers each input as parameter `ParamId(i)`.
pub fn register(tape: &mut Tape, inputs: &[Matrix]) -> Vec<NodeId> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, m)| tape.param(ParamId(i as u32), m.clone()))
        .collect()
}

/// Checks a scalar tape graph built by `build` against finite differences
/// with respect to every input, registered as `ParamId(0..)`.
pub fn check_graph(inputs: &[Matrix], build: impl Fn(&mut Tape, &[Matrix]) -> Result<NodeId>, step: f64) -> Result<f64> {
    let ids: Vec<ParamId> = (0..inputs.len()).map(|i| ParamId(i as u32)).collect();
    check_graph_ids(inputs, &ids, build, step)
}

/// Like [`check_graph`], reading the gradient of input `i` from `ids[i]`.
pub fn check_graph_ids(
    inputs: &[Matrix],
    ids: &[ParamId],
    build: impl Fn(&mut Tape, &[Matrix]) -> Result<NodeId>,
    step: f64,
) -> Result<f64> {
    let value = |xs: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, xs)?;
        Ok(tape.value(loss).data()[0])
    };
    let grad = |xs: &[Matrix]| -> Result<Vec<Matrix>> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, xs)?;
        let g = tape.backward(loss)?;
        Ok(xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                g.get(ids[i])
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()))
            })
            .collect())
    };
    check_with(inputs, value, grad, step)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub configs: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !(r.max_rel_error < self.tolerance))
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let status = if r.max_rel_error < self.tolerance { "PASS" } else { "FAIL" };
            writeln!(
                f,
                "{status} {:<28} max_rel_err={:.3e} configs={}",
                r.name, r.max_rel_error, r.configs
            )?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} checks, {} failed, tolerance {:.0e}",
            self.results.len(),
            failed,
            self.tolerance
        )
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::new(rows, cols, data).expect("finite")
}

/// Entries with magnitude in `[0.1, 1)` and random sign, away from kinks.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Matrix::new(rows, cols, data).expect("finite")
}

fn random_priors(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// `sum(r * x)` for a fixed random `r`, turning a matrix-valued op into a
/// scalar with a non-trivial gradient.
fn project(tape: &mut Tape, x: NodeId, rng_seed: u64) -> Result<NodeId> {
    let (rows, cols) = tape.value(x).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let r = tape.constant(uniform(&mut rng, rows, cols, -1.0, 1.0));
    let m = tape.mul(x, r)?;
    Ok(tape.sum(m))
}

struct Case {
    name: &'static str,
    run: fn(&mut ChaCha8Rng, f64) -> Result<f64>,
}

macro_rules! unary_case {
    ($name:literal, $gen:expr, $op:expr) => {
        Case {
            name: $name,
            run: |rng, step| {
                let (r, c) = (rng.random_range(1..6), rng.random_range(1..5));
                let x: Matrix = $gen(rng, r, c);
                let seed = rng.random();
                check_graph(
                    &[x],
                    |t, xs| {
                        let p = register(t, xs);
                        let y = $op(t, p[0])?;
                        project(t, y, seed)
                    },
                    step,
                )
            },
        }
    };
}

fn std_gen(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    uniform(rng, r, c, -2.0, 2.0)
}

fn positive_gen(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    uniform(rng, r, c, 0.3, 2.0)
}

fn ok(n: NodeId) -> Result<NodeId> {
    Ok(n)
}

fn binary_broadcast(rng: &mut ChaCha8Rng, step: f64, op: fn(&mut Tape, NodeId, NodeId) -> Result<NodeId>) -> Result<f64> {
    let (r, c) = (rng.random_range(1..6), rng.random_range(1..5));
    let a = std_gen(rng, r, c);
    // same shape, a row vector, a column vector, or a scalar
    let b = match rng.random_range(0..4) {
        0 => std_gen(rng, r, c),
        1 => std_gen(rng, 1, c),
        2 => std_gen(rng, r, 1),
        _ => std_gen(rng, 1, 1),
    };
    let seed = rng.random();
    let swap = rng.random::<bool>();
    check_graph(
        &[a, b],
        |t, xs| {
            let p = register(t, xs);
            let y = if swap { op(t, p[1], p[0])? } else { op(t, p[0], p[1])? };
            project(t, y, seed)
        },
        step,
    )
}

fn op_cases() -> Vec<Case> {
    vec![
        Case {
            name: "op/matmul",
            run: |rng, step| {
                let (n, k, m) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6));
                let (a, b) = (std_gen(rng, n, k), std_gen(rng, k, m));
                let seed = rng.random();
                check_graph(
                    &[a, b],
                    |t, xs| {
                        let p = register(t, xs);
                        let y = t.matmul(p[0], p[1])?;
                        project(t, y, seed)
                    },
                    step,
                )
            },
        },
        Case {
            name: "op/add",
            run: |rng, step| binary_broadcast(rng, step, |t, a, b| t.add(a, b)),
        },
        Case {
            name: "op/sub",
            run: |rng, step| binary_broadcast(rng, step, |t, a, b| t.sub(a, b)),
        },
        Case {
            name: "op/mul",
            run: |rng, step| binary_broadcast(rng, step, |t, a, b| t.mul(a, b)),
        },
        unary_case!("op/scale", std_gen, |t: &mut Tape, x| ok(t.scale(x, -1.7))),
        unary_case!("op/add_scalar", std_gen, |t: &mut Tape, x| ok(t.add_scalar(x, 0.6))),
        Case {
            name: "op/powi",
            run: |rng, step| {
                let k = rng.random_range(1..=5);
                let x = { let a0 = rng.random_range(1..6); let a1 = rng.random_range(1..5); std_gen(rng, a0, a1) };
                let seed = rng.random();
                check_graph(
                    &[x],
                    |t, xs| {
                        let p = register(t, xs);
                        let y = t.powi(p[0], k);
                        project(t, y, seed)
                    },
                    step,
                )
            },
        },
        unary_case!("op/sigmoid", std_gen, |t: &mut Tape, x| ok(t.sigmoid(x))),
        unary_case!("op/relu", away_from_zero, |t: &mut Tape, x| ok(t.relu(x))),
        unary_case!("op/ln", positive_gen, |t: &mut Tape, x| ok(t.ln(x, LOG_EPS))),
        unary_case!("op/softmax_rows", std_gen, |t: &mut Tape, x| ok(t.softmax_rows(x))),
        Case {
            name: "op/cross_entropy",
            run: |rng, step| {
                let (r, c) = (rng.random_range(1..6), rng.random_range(2..5));
                let p = positive_gen(rng, r, c);
                let labels: Vec<usize> = (0..r).map(|_| rng.random_range(0..c)).collect();
                check_graph(
                    &[p],
                    |t, xs| {
                        let n = register(t, xs);
                        t.cross_entropy(n[0], &labels, LOG_EPS)
                    },
                    step,
                )
            },
        },
        Case {
            name: "op/softmax_cross_entropy",
            run: |rng, step| {
                let (r, c) = (rng.random_range(1..6), rng.random_range(2..5));
                let z = std_gen(rng, r, c);
                let labels: Vec<usize> = (0..r).map(|_| rng.random_range(0..c)).collect();
                check_graph(
                    &[z],
                    |t, xs| {
                        let n = register(t, xs);
                        t.softmax_cross_entropy(n[0], &labels)
                    },
                    step,
                )
            },
        },
        unary_case!("op/sum", std_gen, |t: &mut Tape, x| {
            let s = t.sum(x);
            ok(t.powi(s, 2))
        }),
        unary_case!("op/mean", std_gen, |t: &mut Tape, x| {
            let s = t.mean(x)?;
            ok(t.powi(s, 2))
        }),
        unary_case!("op/mean_rows", std_gen, |t: &mut Tape, x| t.mean_rows(x)),
        unary_case!("op/norm2", away_from_zero, |t: &mut Tape, x| ok(t.norm2(x))),
        Case {
            name: "op/slice_rows",
            run: |rng, step| {
                let r = rng.random_range(1..6);
                let x = { let a1 = rng.random_range(1..5); std_gen(rng, r, a1) };
                let start = rng.random_range(0..r);
                let len = rng.random_range(1..=r - start);
                let seed = rng.random();
                check_graph(
                    &[x],
                    |t, xs| {
                        let p = register(t, xs);
                        let y = t.slice_rows(p[0], start, len)?;
                        project(t, y, seed)
                    },
                    step,
                )
            },
        },
        Case {
            name: "op/slice_cols",
            run: |rng, step| {
                let c = rng.random_range(1..5);
                let x = { let a0 = rng.random_range(1..6); std_gen(rng, a0, c) };
                let start = rng.random_range(0..c);
                let len = rng.random_range(1..=c - start);
                let seed = rng.random();
                check_graph(
                    &[x],
                    |t, xs| {
                        let p = register(t, xs);
                        let y = t.slice_cols(p[0], start, len)?;
                        project(t, y, seed)
                    },
                    step,
                )
            },
        },
        Case {
            // the backward pass must equal the gradient of `-lambda * f`
            name: "op/grad_reversal",
            run: |rng, step| {
                let x = { let a0 = rng.random_range(1..6); let a1 = rng.random_range(1..5); std_gen(rng, a0, a1) };
                let lambda = rng.random_range(0.0..3.0);
                let seed = rng.random();
                let value = |xs: &[Matrix]| -> Result<f64> {
                    let mut t = Tape::new();
                    let p = register(&mut t, xs);
                    let s = t.sigmoid(p[0]);
                    let y = project(&mut t, s, seed)?;
                    Ok(-lambda * t.value(y).data()[0])
                };
                let grad = |xs: &[Matrix]| -> Result<Vec<Matrix>> {
                    let mut t = Tape::new();
                    let p = register(&mut t, xs);
                    let r = t.grad_reversal(p[0], lambda)?;
                    let s = t.sigmoid(r);
                    let y = project(&mut t, s, seed)?;
                    Ok(vec![t.backward(y)?.get(ParamId(0)).cloned().expect("registered")])
                };
                check_with(&[x], value, grad, step)
            },
        },
    ]
}

fn loss_cases() -> Vec<Case> {
    vec![
        Case {
            name: "loss/cmd",
            run: |rng, step| {
                let d = rng.random_range(1..5);
                let s = { let a0 = rng.random_range(2..7); uniform(rng, a0, d, 0.0, 1.0) };
                let tg = { let a0 = rng.random_range(2..7); uniform(rng, a0, d, 0.0, 1.0) };
                let order = rng.random_range(1..=6);
                check_graph(
                    &[s, tg],
                    |t, xs| {
                        let p = register(t, xs);
                        graph::cmd(t, p[0], p[1], order, IntervalBounds::unit())
                    },
                    step,
                )
            },
        },
        Case {
            name: "loss/weighted_cmd",
            run: |rng, step| {
                let classes = rng.random_range(2..4);
                let d = rng.random_range(1..4);
                let mut inputs: Vec<Matrix> = (0..classes)
                    .map(|_| { let a0 = rng.random_range(2..5); uniform(rng, a0, d, 0.0, 1.0) })
                    .collect();
                inputs.push({ let a0 = rng.random_range(2..7); uniform(rng, a0, d, 0.0, 1.0) });
                inputs.push(std_gen(rng, 1, classes));
                let priors = random_priors(rng, classes);
                let order = rng.random_range(1..=5);
                let centering = if rng.random::<bool>() {
                    MixtureCentering::Mixture
                } else {
                    MixtureCentering::PerClass
                };
                check_graph(
                    &inputs,
                    |t, xs| {
                        let p = register(t, &xs[..=classes]);
                        let cw = ClassWeight::new(xs[classes + 1].data().to_vec(), priors.clone())?;
                        let w = cw.record(t, ParamId(classes as u32 + 1), None)?;
                        let u = IntervalBounds::unit();
                        graph::weighted_cmd(t, &p[..classes], &priors, w, p[classes], order, u, centering)
                    },
                    step,
                )
            },
        },
        Case {
            name: "loss/adversarial",
            run: |rng, step| {
                let ds = { let a0 = rng.random_range(1..7); uniform(rng, a0, 1, 0.05, 0.95) };
                let dt = { let a0 = rng.random_range(1..7); uniform(rng, a0, 1, 0.05, 0.95) };
                check_graph(
                    &[ds, dt],
                    |t, xs| {
                        let p = register(t, xs);
                        graph::adversarial_loss_d(t, p[0], p[1])
                    },
                    step,
                )
            },
        },
        Case {
            name: "loss/weighted_adversarial",
            run: |rng, step| {
                let classes = rng.random_range(2..4);
                let mut inputs: Vec<Matrix> = (0..classes)
                    .map(|_| { let a0 = rng.random_range(1..5); uniform(rng, a0, 1, 0.05, 0.95) })
                    .collect();
                inputs.push({ let a0 = rng.random_range(1..7); uniform(rng, a0, 1, 0.05, 0.95) });
                inputs.push(std_gen(rng, 1, classes));
                let priors = random_priors(rng, classes);
                check_graph(
                    &inputs,
                    |t, xs| {
                        let p = register(t, &xs[..=classes]);
                        let cw = ClassWeight::new(xs[classes + 1].data().to_vec(), priors.clone())?;
                        let w = cw.record(t, ParamId(classes as u32 + 1), None)?;
                        graph::weighted_adversarial_loss_d(t, &p[..classes], &priors, w, p[classes])
                    },
                    step,
                )
            },
        },
        Case {
            name: "loss/task",
            run: |rng, step| {
                let a = std_gen(rng, 1, 1);
                let b = std_gen(rng, 1, 1);
                let alpha = rng.random_range(0.0..10.0);
                check_graph(
                    &[a, b],
                    |t, xs| {
                        let p = register(t, xs);
                        let s = t.powi(p[0], 2);
                        let i = t.sigmoid(p[1]);
                        graph::task_loss(t, s, i, alpha)
                    },
                    step,
                )
            },
        },
    ]
}

/// Id for a layer input that is not a model parameter.
const FREE_INPUT: ParamId = ParamId(100);

fn small_arch(rng: &mut ChaCha8Rng) -> Architecture {
    Architecture {
        input_dim: rng.random_range(1..4),
        hidden_dim: rng.random_range(1..5),
        num_classes: rng.random_range(2..4),
        disc_hidden: rng.random_range(1..4),
    }
}

fn layer_cases() -> Vec<Case> {
    vec![
        Case {
            name: "layer/encoder",
            run: |rng, step| {
                let a = small_arch(rng);
                let x = { let a0 = rng.random_range(1..6); std_gen(rng, a0, a.input_dim) };
                let w = std_gen(rng, a.input_dim, a.hidden_dim);
                let b = std_gen(rng, 1, a.hidden_dim);
                let seed = rng.random();
                check_graph(
                    &[w, b],
                    |t, xs| {
                        let mut s = ModelState::zeros(a, vec![0.5, 0.5])?;
                        s.encoder.weight = xs[0].clone();
                        s.encoder.bias = xs[1].clone();
                        let xn = t.constant(x.clone());
                        let h = s.record_encoder(t, xn)?;
                        project(t, h, seed)
                    },
                    step,
                )
            },
        },
        Case {
            name: "layer/classifier",
            run: |rng, step| {
                let a = small_arch(rng);
                let rows = rng.random_range(1..6);
                let h = uniform(rng, rows, a.hidden_dim, 0.0, 1.0);
                let w = std_gen(rng, a.hidden_dim, a.num_classes);
                let b = std_gen(rng, 1, a.num_classes);
                let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..a.num_classes)).collect();
                check_graph_ids(
                    &[h, w, b],
                    &[FREE_INPUT, params::CLASSIFIER_W, params::CLASSIFIER_B],
                    |t, xs| {
                        let mut s = ModelState::zeros(a, vec![1.0 / a.num_classes as f64; a.num_classes])?;
                        s.classifier.weight = xs[1].clone();
                        s.classifier.bias = xs[2].clone();
                        let hn = t.param(FREE_INPUT, xs[0].clone());
                        let z = s.record_classifier_logits(t, hn)?;
                        t.softmax_cross_entropy(z, &labels)
                    },
                    step,
                )
            },
        },
        Case {
            name: "layer/discriminator",
            run: |rng, step| {
                let a = small_arch(rng);
                let h = { let a0 = rng.random_range(1..6); uniform(rng, a0, a.hidden_dim, 0.0, 1.0) };
                let w1 = std_gen(rng, a.hidden_dim, a.disc_hidden);
                // biases near 0.5 keep pre-activations off the relu kink
                let b1 = uniform(rng, 1, a.disc_hidden, 0.3, 0.7);
                let w2 = std_gen(rng, a.disc_hidden, 1);
                let b2 = std_gen(rng, 1, 1);
                let seed = rng.random();
                let inputs = [h, w1, b1, w2, b2];
                let kink = {
                    let z = inputs[0].matmul(&inputs[1])?.add_row(&inputs[2])?;
                    z.data().iter().any(|v| v.abs() < 1e-3)
                };
                let inputs = if kink {
                    [inputs[0].clone(), inputs[1].map(|v| v * 0.5), inputs[2].map(|v| v + 1.0), inputs[3].clone(), inputs[4].clone()]
                } else {
                    inputs
                };
                check_graph_ids(
                    &inputs,
                    &[
                        FREE_INPUT,
                        params::DISC_HIDDEN_W,
                        params::DISC_HIDDEN_B,
                        params::DISC_OUT_W,
                        params::DISC_OUT_B,
                    ],
                    |t, xs| {
                        let mut s = ModelState::zeros(a, vec![0.5, 0.5])?;
                        s.disc_hidden.weight = xs[1].clone();
                        s.disc_hidden.bias = xs[2].clone();
                        s.disc_out.weight = xs[3].clone();
                        s.disc_out.bias = xs[4].clone();
                        let hn = t.param(FREE_INPUT, xs[0].clone());
                        let d = s.record_discriminator(t, hn)?;
                        let l = t.ln(d, LOG_EPS);
                        project(t, l, seed)
                    },
                    step,
                )
            },
        },
        Case {
            name: "layer/class_weight",
            run: |rng, step| {
                let classes = rng.random_range(2..5);
                let logits = std_gen(rng, 1, classes);
                let priors = random_priors(rng, classes);
                let reverse = rng.random::<bool>();
                let seed = rng.random();
                let value = |xs: &[Matrix]| -> Result<f64> {
                    let cw = ClassWeight::new(xs[0].data().to_vec(), priors.clone())?;
                    let mut t = Tape::new();
                    let w = t.constant(Matrix::row_vector(&cw.materialize()));
                    let y = project(&mut t, w, seed)?;
                    let v = t.value(y).data()[0];
                    Ok(if reverse { -v } else { v })
                };
                let grad = |xs: &[Matrix]| -> Result<Vec<Matrix>> {
                    let cw = ClassWeight::new(xs[0].data().to_vec(), priors.clone())?;
                    let mut t = Tape::new();
                    let w = cw.record(&mut t, ParamId(0), reverse.then_some(1.0))?;
                    let y = project(&mut t, w, seed)?;
                    Ok(vec![t.backward(y)?.get(ParamId(0)).cloned().expect("registered")])
                };
                check_with(&[logits], value, grad, step)
            },
        },
    ]
}

/// Sign with which the invariance loss reaches each parameter group:
/// gradient reversal flips it for the encoder, and for learned weights in
/// the adversarial family.
fn inv_sign(variant: Variant, id: ParamId, lambda: f64) -> f64 {
    let reversed = variant.family() == Family::Dann
        && (id == params::ENCODER_W
            || id == params::ENCODER_B
            || (id == params::CLASS_WEIGHT && variant.weighting() == Weighting::Learned));
    if reversed {
        -lambda
    } else {
        1.0
    }
}

const KINK_MARGIN: f64 = 1e-3;

fn kink_margin(state: &ModelState, batch: &StepBatch) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for x in [&batch.x_source, &batch.x_target] {
        let h = forward_encode(state, x)?;
        let z = h.matmul(&state.disc_hidden.weight)?.add_row(&state.disc_hidden.bias)?;
        margin = z.data().iter().fold(margin, |m, v| m.min(v.abs()));
    }
    Ok(margin)
}

/// Gradient of the full training objective with respect to every model
/// parameter, for one variant.
fn check_objective(variant: Variant, rng: &mut ChaCha8Rng, step: f64) -> Result<f64> {
    let arch = small_arch(rng);
    let l = arch.num_classes;
    let priors = random_priors(rng, l);
    let cw = ClassWeight::new(std_gen(rng, 1, l).into_data(), priors)?;
    let counts: Vec<usize> = (0..l).map(|_| rng.random_range(2..4)).collect();
    let y_source: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
    let batch = StepBatch {
        x_source: std_gen(rng, y_source.len(), arch.input_dim),
        y_source,
        class_counts: counts,
        x_target: { let n = rng.random_range(2..7); std_gen(rng, n, arch.input_dim) },
    };
    // redraw until no discriminator pre-activation sits near the relu kink
    let state = loop {
        let mut init = ChaCha8Rng::seed_from_u64(rng.random());
        let mut state = ModelState::init(arch, cw.clone(), 0, &mut init)?;
        state.disc_hidden.bias = uniform(rng, 1, arch.disc_hidden, -0.5, 1.0);
        if kink_margin(&state, &batch)? > KINK_MARGIN {
            break state;
        }
    };
    let cfg = TrainConfig {
        variant,
        alpha: rng.random_range(0.1..3.0),
        moment_order: rng.random_range(1..=5),
        grl_lambda: rng.random_range(0.2..2.0),
        ..TrainConfig::default()
    };
    let ids = [
        params::ENCODER_W,
        params::ENCODER_B,
        params::CLASSIFIER_W,
        params::CLASSIFIER_B,
        params::DISC_HIDDEN_W,
        params::DISC_HIDDEN_B,
        params::DISC_OUT_W,
        params::DISC_OUT_B,
        params::CLASS_WEIGHT,
    ];

    let mut worst = 0.0f64;
    for id in ids {
        if id == params::CLASS_WEIGHT && variant.weighting() != Weighting::Learned {
            continue;
        }
        let sign = inv_sign(variant, id, cfg.grl_lambda);
        let base = state.clone();
        let start = Matrix::row_vector(base.clone().param_mut(id).expect("known id"));
        let with = |p: &Matrix| {
            let mut s = base.clone();
            s.param_mut(id).expect("known id").copy_from_slice(p.data());
            s
        };
        let value = |xs: &[Matrix]| -> Result<f64> {
            let s = with(&xs[0]);
            let mut t = Tape::new();
            let obj = record_objective(&mut t, &s, &cfg, &batch)?;
            let sup = t.value(obj.sup).data()[0];
            let inv = obj.inv.map_or(0.0, |n| t.value(n).data()[0]);
            Ok(sup + sign * cfg.effective_alpha() * inv)
        };
        let grad = |xs: &[Matrix]| -> Result<Vec<Matrix>> {
            let s = with(&xs[0]);
            let mut t = Tape::new();
            let obj = record_objective(&mut t, &s, &cfg, &batch)?;
            let g = t.backward(obj.total)?;
            Ok(vec![g
                .get(id)
                .map(|m| Matrix::row_vector(m.data()))
                .unwrap_or_else(|| Matrix::zeros(1, start.cols()))])
        };
        worst = worst.max(check_with(std::slice::from_ref(&start), value, grad, step)?);
    }
    Ok(worst)
}

/// Runs every check over `configs` random configurations each.
pub fn run_gradcheck(configs: usize, seed: u64) -> Result<GradcheckReport> {
    run_gradcheck_with(configs, seed, DEFAULT_STEP, DEFAULT_TOLERANCE)
}

pub fn run_gradcheck_with(configs: usize, seed: u64, step: f64, tolerance: f64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    for case in op_cases().into_iter().chain(loss_cases()).chain(layer_cases()) {
        let mut worst = 0.0f64;
        for _ in 0..configs {
            worst = worst.max((case.run)(&mut rng, step)?);
        }
        results.push(CheckResult {
            name: case.name.to_string(),
            configs,
            max_rel_error: worst,
        });
    }
    for variant in Variant::ALL {
        let mut worst = 0.0f64;
        for _ in 0..configs {
            worst = worst.max(check_objective(variant, &mut rng, step)?);
        }
        results.push(CheckResult {
            name: format!("objective/{variant}"),
            configs,
            max_rel_error: worst,
        });
    }
    Ok(GradcheckReport { tolerance, results })
}

/// Number of distinct differentiable tape ops; the report covers each.
pub const DIFFERENTIABLE_OPS: usize = 20;
