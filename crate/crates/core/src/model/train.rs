use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{forward_classify, forward_encode, params, Architecture, ModelState};
use super::optim::RmsProp;
use super::sampler::{StratifiedSampler, TargetSampler};
use super::{Family, TrainConfig, Variant, WeightInit, Weighting};
use crate::classweight::{adjust_posterior, init_from_source_only, true_weight, ClassWeight};
use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::losses::{graph, IntervalBounds};
use crate::numkit::{Matrix, NodeId, Tape};

const EVAL_CHUNK: usize = 1024;

/// Metrics after one epoch. Losses are means over the epoch's minibatches;
/// accuracies are on the full source set and the target test set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub sup_loss: f64,
    pub inv_loss: f64,
    pub source_acc: f64,
    pub target_acc: f64,
    /// Fraction of target test predictions equal to the source majority class.
    pub majority_fraction: f64,
    /// Mean predicted target test posterior per class, after correction for
    /// variants that correct.
    pub posterior_mass: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_target_acc: f64,
    /// 1-based epoch of `best_target_acc` (first one on ties).
    pub best_epoch: usize,
    pub final_target_acc: f64,
    pub final_w: Vec<f64>,
    pub report_best: bool,
}

impl RunRecord {
    /// Best-epoch or final-epoch target accuracy, per the run's config.
    pub fn reported_accuracy(&self) -> f64 {
        if self.report_best {
            self.best_target_acc
        } else {
            self.final_target_acc
        }
    }
}

/// Fraction of positions where the two lists agree.
pub fn evaluate(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("accuracy of an empty set"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `f(G(x))`.
pub fn predict_posterior(state: &ModelState, x: &Matrix) -> Result<Matrix> {
    forward_classify(state, &forward_encode(state, x)?)
}

/// Posterior used for target predictions: corrected by the model's class
/// weight for variants that correct.
pub fn target_posterior(state: &ModelState, x: &Matrix, variant: Variant) -> Result<Matrix> {
    let post = predict_posterior(state, x)?;
    if variant.corrects_posterior() {
        adjust_posterior(&post, &state.class_weight.materialize())
    } else {
        Ok(post)
    }
}

pub fn predict_target(state: &ModelState, x: &Matrix, variant: Variant) -> Result<Vec<usize>> {
    Ok(target_posterior(state, x, variant)?.argmax_rows())
}

fn chunked<T>(n: usize, mut f: impl FnMut(&[usize]) -> Result<Vec<T>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    let all: Vec<usize> = (0..n).collect();
    for rows in all.chunks(EVAL_CHUNK) {
        out.extend(f(rows)?);
    }
    Ok(out)
}

fn predict_labeled(state: &ModelState, ds: &LabeledDataset, variant: Variant) -> Result<Vec<usize>> {
    chunked(ds.len(), |rows| predict_target(state, &ds.dense_rows(rows), variant))
}

/// Target predictions and per-class mean posterior over `ds`.
fn predict_with_mass(state: &ModelState, ds: &LabeledDataset, variant: Variant) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut mass = vec![0.0; state.arch.num_classes];
    let pred = chunked(ds.len(), |rows| {
        let post = target_posterior(state, &ds.dense_rows(rows), variant)?;
        for row in post.iter_rows() {
            for (m, p) in mass.iter_mut().zip(row) {
                *m += p;
            }
        }
        Ok(post.argmax_rows())
    })?;
    mass.iter_mut().for_each(|m| *m /= ds.len() as f64);
    Ok((pred, mass))
}

fn unlabeled_posterior(state: &ModelState, dt: &UnlabeledDataset) -> Result<Matrix> {
    let mut parts = Vec::new();
    let all: Vec<usize> = (0..dt.len()).collect();
    for rows in all.chunks(EVAL_CHUNK) {
        parts.push(predict_posterior(state, &dt.dense_rows(rows))?);
    }
    Matrix::vstack(&parts.iter().collect::<Vec<_>>())
}

/// Class weight initialised from a trained source-only model's mean
/// posterior on the target set.
pub fn initial_weight_from(state: &ModelState, source: &LabeledDataset, target: &UnlabeledDataset) -> Result<ClassWeight> {
    init_from_source_only(&unlabeled_posterior(state, target)?, source.labels())
}

/// One minibatch: source rows grouped into contiguous class blocks of sizes
/// `class_counts`, plus a target batch.
#[derive(Clone, Debug)]
pub(crate) struct StepBatch {
    pub x_source: Matrix,
    pub y_source: Vec<usize>,
    pub class_counts: Vec<usize>,
    pub x_target: Matrix,
}

pub(crate) struct Objective {
    pub total: NodeId,
    pub sup: NodeId,
    pub inv: Option<NodeId>,
}

fn class_blocks(tape: &mut Tape, x: NodeId, counts: &[usize]) -> Result<Vec<NodeId>> {
    let mut start = 0;
    counts
        .iter()
        .map(|&n| {
            let b = tape.slice_rows(x, start, n);
            start += n;
            b
        })
        .collect()
}

/// Records the training objective `L_sup + alpha L_inv` of `cfg.variant`.
pub(crate) fn record_objective(tape: &mut Tape, state: &ModelState, cfg: &TrainConfig, batch: &StepBatch) -> Result<Objective> {
    let xs = tape.constant(batch.x_source.clone());
    let xt = tape.constant(batch.x_target.clone());
    let hs = state.record_encoder(tape, xs)?;
    let logits = state.record_classifier_logits(tape, hs)?;
    let sup = tape.softmax_cross_entropy(logits, &batch.y_source)?;

    let variant = cfg.variant;
    let family = variant.family();
    if family == Family::SourceOnly {
        return Ok(Objective { total: sup, sup, inv: None });
    }
    let ht = state.record_encoder(tape, xt)?;
    let priors = state.class_weight.source_priors().to_vec();
    let lambda = cfg.grl_lambda;
    let w = match variant.weighting() {
        Weighting::None => None,
        Weighting::Learned => {
            let reverse = (family == Family::Dann).then_some(lambda);
            Some(state.class_weight.record(tape, params::CLASS_WEIGHT, reverse)?)
        }
        Weighting::Oracle => Some(tape.constant(Matrix::row_vector(&state.class_weight.materialize()))),
    };

    let inv = match family {
        Family::Cmd => {
            let bounds = IntervalBounds::unit();
            match w {
                None => graph::cmd(tape, hs, ht, cfg.moment_order, bounds)?,
                Some(w) => {
                    let blocks = class_blocks(tape, hs, &batch.class_counts)?;
                    graph::weighted_cmd(tape, &blocks, &priors, w, ht, cfg.moment_order, bounds, cfg.centering)?
                }
            }
        }
        Family::Dann => {
            let hs_r = tape.grad_reversal(hs, lambda)?;
            let ht_r = tape.grad_reversal(ht, lambda)?;
            let ds = state.record_discriminator(tape, hs_r)?;
            let dt = state.record_discriminator(tape, ht_r)?;
            match w {
                None => graph::adversarial_loss_d(tape, ds, dt)?,
                Some(w) => {
                    let blocks = class_blocks(tape, ds, &batch.class_counts)?;
                    graph::weighted_adversarial_loss_d(tape, &blocks, &priors, w, dt)?
                }
            }
        }
        Family::SourceOnly => unreachable!(),
    };
    let total = graph::task_loss(tape, sup, inv, cfg.effective_alpha())?;
    Ok(Objective { total, sup, inv: Some(inv) })
}

fn check_inputs(cfg: &TrainConfig, ds: &LabeledDataset, dt: &UnlabeledDataset, test: &LabeledDataset) -> Result<()> {
    cfg.validate(ds.num_classes())?;
    if ds.is_empty() || dt.is_empty() || test.is_empty() {
        return Err(Error::contract("training needs non-empty source, target and test sets"));
    }
    if let Some(c) = ds.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::contract(format!("class {c} has no source examples")));
    }
    if dt.feature_dim() != ds.feature_dim() || test.feature_dim() != ds.feature_dim() {
        return Err(Error::contract(format!(
            "feature dimensions differ: source {}, target {}, test {}",
            ds.feature_dim(),
            dt.feature_dim(),
            test.feature_dim()
        )));
    }
    if test.num_classes() != ds.num_classes() {
        return Err(Error::contract(format!(
            "test set has {} classes, source {}",
            test.num_classes(),
            ds.num_classes()
        )));
    }
    Ok(())
}

/// Trains `cfg.variant`. Learned class weights with
/// [`WeightInit::SourceOnly`] first train a source-only model under the same
/// seed to obtain the initial weight.
pub fn train(
    cfg: &TrainConfig,
    ds: &LabeledDataset,
    dt: &UnlabeledDataset,
    test: &LabeledDataset,
) -> Result<(ModelState, RunRecord)> {
    let initial = if cfg.variant.weighting() == Weighting::Learned && cfg.w_init == WeightInit::SourceOnly {
        let so = TrainConfig {
            variant: Variant::So,
            epochs: cfg.w_init_epochs.unwrap_or(cfg.epochs),
            ..cfg.clone()
        };
        let (state, _) = train_with_initial_weight(&so, ds, dt, test, None)?;
        Some(initial_weight_from(&state, ds, dt)?)
    } else {
        None
    };
    train_with_initial_weight(cfg, ds, dt, test, initial)
}

/// Trains `cfg.variant` with an explicit initial class weight for variants
/// that learn one (`None` means `w = 1`). Other variants ignore it.
pub fn train_with_initial_weight(
    cfg: &TrainConfig,
    ds: &LabeledDataset,
    dt: &UnlabeledDataset,
    test: &LabeledDataset,
    initial: Option<ClassWeight>,
) -> Result<(ModelState, RunRecord)> {
    check_inputs(cfg, ds, dt, test)?;
    let priors = ds.priors();
    let class_weight = match cfg.variant.weighting() {
        Weighting::Learned => match initial {
            Some(cw) => ClassWeight::from_weights(&cw.materialize(), priors.clone())?,
            None => ClassWeight::uniform(priors.clone())?,
        },
        Weighting::Oracle => ClassWeight::from_weights(&true_weight(&priors, &test.priors())?, priors.clone())?,
        Weighting::None => ClassWeight::uniform(priors.clone())?,
    };
    let arch = Architecture {
        input_dim: ds.feature_dim(),
        hidden_dim: cfg.hidden_dim,
        num_classes: ds.num_classes(),
        disc_hidden: cfg.disc_hidden,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = ModelState::init(arch, class_weight, cfg.seed, &mut rng)?;
    let mut opt = RmsProp::new(cfg.lr_params, cfg.lr_w);
    let mut source_sampler = StratifiedSampler::new(ds.labels(), ds.num_classes(), cfg.batch_size);
    let mut target_sampler = TargetSampler::new(dt.len(), cfg.target_batch_size.unwrap_or(cfg.batch_size));
    let steps = ds.len().div_ceil(cfg.batch_size);
    let majority = Matrix::row_vector(&priors).argmax_rows()[0];

    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (mut sup_sum, mut inv_sum) = (0.0, 0.0);
        for _ in 0..steps {
            let rows = source_sampler.next_batch(&mut rng);
            let target_rows = target_sampler.next_batch(&mut rng);
            let batch = StepBatch {
                x_source: ds.dense_rows(&rows),
                y_source: rows.iter().map(|&r| ds.labels()[r]).collect(),
                class_counts: source_sampler.counts().to_vec(),
                x_target: dt.dense_rows(&target_rows),
            };
            let mut tape = Tape::new();
            let obj = record_objective(&mut tape, &state, cfg, &batch)?;
            sup_sum += tape.value(obj.sup).data()[0];
            inv_sum += obj.inv.map_or(0.0, |n| tape.value(n).data()[0]);
            let grads = tape.backward(obj.total)?;
            opt.step(&mut state, &grads);
        }
        if !state.all_finite() {
            return Err(Error::contract(format!("parameters became non-finite in epoch {epoch}")));
        }

        let source_pred = predict_labeled(&state, ds, Variant::So)?;
        let (target_pred, posterior_mass) = predict_with_mass(&state, test, cfg.variant)?;
        let majority_hits = target_pred.iter().filter(|&&p| p == majority).count();
        epochs.push(EpochRecord {
            epoch,
            sup_loss: sup_sum / steps as f64,
            inv_loss: inv_sum / steps as f64,
            source_acc: evaluate(&source_pred, ds.labels())?,
            target_acc: evaluate(&target_pred, test.labels())?,
            majority_fraction: majority_hits as f64 / test.len() as f64,
            posterior_mass,
            w: state.class_weight.materialize(),
        });
    }

    let best = epochs
        .iter()
        .fold(&epochs[0], |b, e| if e.target_acc > b.target_acc { e } else { b });
    let last = epochs.last().expect("epochs >= 1");
    let record = RunRecord {
        variant: cfg.variant,
        seed: cfg.seed,
        best_target_acc: best.target_acc,
        best_epoch: best.epoch,
        final_target_acc: last.target_acc,
        final_w: last.w.clone(),
        report_best: cfg.report_best,
        epochs,
    };
    Ok((state, record))
}
