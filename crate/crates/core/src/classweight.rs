//! The trainable class weight `w` and the posterior correction built on it.
//!
//! `w` is stored as unconstrained logits and materialized as
//! `w_i = softmax(logits)_i / P_S(y=i)`. Both constraints (`w_i > 0` and
//! `sum_i w_i P_S(y=i) = 1`) then hold for any logits, so `w` can be trained
//! by plain gradient steps on the logits.

use crate::error::{Error, Result};
use crate::numkit::{Matrix, NodeId, ParamId, Tape};

const PRIOR_SUM_TOL: f64 = 1e-10;
const POSTERIOR_SUM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeight {
    logits: Vec<f64>,
    source_priors: Vec<f64>,
}

fn check_priors(priors: &[f64], name: &str) -> Result<()> {
    if priors.is_empty() {
        return Err(Error::contract(format!("{name} is empty")));
    }
    if let Some(p) = priors.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::contract(format!("{name} has a non-positive entry {p}")));
    }
    let total: f64 = priors.iter().sum();
    if (total - 1.0).abs() > PRIOR_SUM_TOL {
        return Err(Error::contract(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}

impl ClassWeight {
    pub fn new(logits: Vec<f64>, source_priors: Vec<f64>) -> Result<Self> {
        check_priors(&source_priors, "source priors")?;
        if logits.len() != source_priors.len() {
            return Err(Error::contract(format!(
                "{} logits for {} classes",
                logits.len(),
                source_priors.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("class weight logits must be finite"));
        }
        Ok(Self { logits, source_priors })
    }

    /// `w = 1`, i.e. the source weighted by its own priors.
    pub fn uniform(source_priors: Vec<f64>) -> Result<Self> {
        let logits = source_priors.iter().map(|p| p.ln()).collect();
        Self::new(logits, source_priors)
    }

    /// The parametrization whose materialized weight is the constraint
    /// projection of `w`: `w_i * p_i` is renormalized to sum to one and then
    /// mapped back through the softmax (exact, since softmax is
    /// shift-invariant).
    pub fn from_weights(w: &[f64], source_priors: Vec<f64>) -> Result<Self> {
        check_priors(&source_priors, "source priors")?;
        if w.len() != source_priors.len() {
            return Err(Error::contract(format!(
                "{} weights for {} classes",
                w.len(),
                source_priors.len()
            )));
        }
        if let Some(v) = w.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::contract(format!("class weight {v} is not positive")));
        }
        let mass: Vec<f64> = w.iter().zip(&source_priors).map(|(w, p)| w * p).collect();
        let total: f64 = mass.iter().sum();
        let logits = mass.iter().map(|m| (m / total).ln()).collect();
        Self::new(logits, source_priors)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn source_priors(&self) -> &[f64] {
        &self.source_priors
    }

    pub fn num_classes(&self) -> usize {
        self.logits.len()
    }

    /// `w_i = softmax(logits)_i / P_S(y=i)`.
    pub fn materialize(&self) -> Vec<f64> {
        let mut s = Matrix::row_vector(&self.logits).softmax_rows().into_data();
        s.iter_mut()
            .zip(&self.source_priors)
            .for_each(|(v, p)| *v /= p);
        s
    }

    /// Records `w` on a tape as a `1 x L` node differentiable through the
    /// logits, registered under `id`.
    ///
    /// With `reverse = Some(lambda)` the logits pass through a gradient
    /// reversal first, so a descent step on the total loss moves `w` to
    /// increase the losses it appears in.
    pub fn record(&self, tape: &mut Tape, id: ParamId, reverse: Option<f64>) -> Result<NodeId> {
        let mut logits = tape.param(id, Matrix::row_vector(&self.logits));
        if let Some(lambda) = reverse {
            logits = tape.grad_reversal(logits, lambda)?;
        }
        let s = tape.softmax_rows(logits);
        let inv = tape.constant(Matrix::row_vector(
            &self.source_priors.iter().map(|p| 1.0 / p).collect::<Vec<_>>(),
        ));
        tape.mul(s, inv)
    }
}

/// Initial weight from a source-only model: the mean predicted target
/// posterior divided by the empirical source class frequency.
pub fn init_from_source_only(target_predictions: &Matrix, source_labels: &[usize]) -> Result<ClassWeight> {
    let classes = target_predictions.cols();
    if target_predictions.rows() == 0 {
        return Err(Error::contract("no target predictions"));
    }
    let mut counts = vec![0usize; classes];
    for &y in source_labels {
        if y >= classes {
            return Err(Error::Index {
                context: "source label",
                index: y,
                limit: classes,
            });
        }
        counts[y] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::contract(format!("class {missing} is absent from the source labels")));
    }
    let n = source_labels.len() as f64;
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let mean_pred = target_predictions.column_means().into_data();
    let w0: Vec<f64> = mean_pred
        .iter()
        .zip(&priors)
        .map(|(m, p)| (m / p).max(f64::MIN_POSITIVE))
        .collect();
    ClassWeight::from_weights(&w0, priors)
}

/// Reweights posterior rows by `w` and renormalizes:
/// `row_i <- w_i row_i / sum_j w_j row_j`.
pub fn adjust_posterior(source_posterior: &Matrix, w: &[f64]) -> Result<Matrix> {
    if source_posterior.cols() != w.len() {
        return Err(Error::Dimension {
            op: "adjust_posterior",
            left: source_posterior.shape(),
            right: (1, w.len()),
        });
    }
    if let Some(v) = w.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::contract(format!("class weight {v} is not positive")));
    }
    let mut out = source_posterior.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > POSTERIOR_SUM_TOL {
            return Err(Error::contract(format!("posterior row {r} sums to {total}")));
        }
        row.iter_mut().zip(w).for_each(|(v, w)| *v *= w);
        let z: f64 = row.iter().sum();
        if !(z > 0.0) {
            return Err(Error::contract(format!("weighted posterior row {r} has zero mass")));
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

/// `w*_i = P_T(y=i) / P_S(y=i)`.
pub fn true_weight(source_priors: &[f64], target_priors: &[f64]) -> Result<Vec<f64>> {
    if source_priors.len() != target_priors.len() {
        return Err(Error::contract(format!(
            "{} source priors but {} target priors",
            source_priors.len(),
            target_priors.len()
        )));
    }
    if let Some(i) = source_priors.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::contract(format!("source prior of class {i} is zero")));
    }
    for (name, p) in [("source", source_priors), ("target", target_priors)] {
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOL || p.iter().any(|&v| v < 0.0) {
            return Err(Error::contract(format!("{name} priors are not a distribution")));
        }
    }
    Ok(target_priors
        .iter()
        .zip(source_priors)
        .map(|(t, s)| t / s)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constraint_sum(w: &[f64], p: &[f64]) -> f64 {
        w.iter().zip(p).map(|(w, p)| w * p).sum()
    }

    #[test]
    fn materialize_examples() {
        let cw = ClassWeight::new(vec![0.3; 4], vec![0.25; 4]).unwrap();
        for w in cw.materialize() {
            assert!((w - 1.0).abs() < 1e-15);
        }
        let cw = ClassWeight::new(vec![0.0, 0.0], vec![0.75, 0.25]).unwrap();
        let w = cw.materialize();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0).abs() < 1e-15);
        assert!((constraint_sum(&w, &[0.75, 0.25]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_priors_rejected() {
        assert!(ClassWeight::new(vec![0.0, 0.0], vec![0.5, 0.6]).is_err());
        assert!(ClassWeight::new(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
        assert!(ClassWeight::new(vec![0.0], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn from_weights_round_trip() {
        let cw = ClassWeight::from_weights(&[1.5, 0.5], vec![0.5, 0.5]).unwrap();
        let w = cw.materialize();
        assert!((w[0] - 1.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
        // off-constraint input is projected: (3, 1) with uniform priors -> (1.5, 0.5)
        let w = ClassWeight::from_weights(&[3.0, 1.0], vec![0.5, 0.5]).unwrap().materialize();
        assert!((w[0] - 1.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
        assert!(ClassWeight::uniform(vec![0.2, 0.8]).unwrap().materialize().iter().all(|w| (w - 1.0).abs() < 1e-14));
    }

    #[test]
    fn init_from_source_only_examples() {
        let uniform = Matrix::filled(7, 3, 1.0 / 3.0);
        let cw = init_from_source_only(&uniform, &[0, 1, 2, 2, 1, 0]).unwrap();
        assert!(cw.materialize().iter().all(|w| (w - 1.0).abs() < 1e-12));

        let preds = Matrix::from_rows(&[[0.9, 0.1], [0.6, 0.4]]).unwrap();
        let cw = init_from_source_only(&preds, &[0, 1, 1, 0]).unwrap();
        let w = cw.materialize();
        assert!((w[0] - 1.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);

        // duplicating the target set leaves w0 unchanged
        let doubled = Matrix::vstack(&[&preds, &preds]).unwrap();
        let w2 = init_from_source_only(&doubled, &[0, 1, 1, 0]).unwrap().materialize();
        assert!(w.iter().zip(&w2).all(|(a, b)| (a - b).abs() < 1e-15));

        assert!(init_from_source_only(&preds, &[0, 0, 0]).is_err());
        assert!(init_from_source_only(&preds, &[0, 2]).is_err());
    }

    #[test]
    fn adjust_posterior_examples() {
        let p = Matrix::from_rows(&[[0.5, 0.5], [0.2, 0.8]]).unwrap();
        assert_eq!(adjust_posterior(&p, &[1.0, 1.0]).unwrap(), p);
        let a = adjust_posterior(&p, &[3.0, 1.0]).unwrap();
        assert!((a.get(0, 0) - 0.75).abs() < 1e-15 && (a.get(0, 1) - 0.25).abs() < 1e-15);
        let a = adjust_posterior(&p, &[0.5, 1.5]).unwrap();
        assert_eq!(a.argmax_rows()[0], 1);

        assert!(adjust_posterior(&Matrix::from_rows(&[[0.5, 0.4]]).unwrap(), &[1.0, 1.0]).is_err());
        assert!(adjust_posterior(&p, &[1.0, 0.0]).is_err());
        assert!(adjust_posterior(&p, &[1.0]).is_err());
    }

    #[test]
    fn true_weight_examples() {
        assert_eq!(true_weight(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(true_weight(&[0.5, 0.5], &[0.75, 0.25]).unwrap(), vec![1.5, 0.5]);
        let w = true_weight(&[1.0 / 3.0; 3], &[1.0 / 6.0, 0.5, 1.0 / 3.0]).unwrap();
        for (a, b) in w.iter().zip([0.5, 1.5, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(true_weight(&[0.0, 1.0], &[0.5, 0.5]).is_err());
        assert!(true_weight(&[0.5, 0.5], &[0.5]).is_err());
    }

    #[test]
    fn recorded_weight_matches_materialize() {
        let cw = ClassWeight::new(vec![0.4, -1.2, 0.1], vec![0.2, 0.5, 0.3]).unwrap();
        let mut tape = Tape::new();
        let w = cw.record(&mut tape, ParamId(9), None).unwrap();
        let direct = cw.materialize();
        for (a, b) in tape.value(w).data().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn priors_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, 2..8).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn materialize_satisfies_constraints(
            priors in priors_strategy(),
            raw in prop::collection::vec(-20.0f64..20.0, 8),
        ) {
            let logits = raw[..priors.len()].to_vec();
            let cw = ClassWeight::new(logits, priors.clone()).unwrap();
            let w = cw.materialize();
            prop_assert!(w.iter().all(|&v| v > 0.0));
            prop_assert!((constraint_sum(&w, &priors) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn adjusted_rows_are_distributions(
            raw in prop::collection::vec(0.01f64..1.0, 3),
            w in prop::collection::vec(0.05f64..5.0, 3),
        ) {
            let s: f64 = raw.iter().sum();
            let row: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let p = Matrix::row_vector(&row);
            let a = adjust_posterior(&p, &w).unwrap();
            prop_assert!((a.data().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let u = adjust_posterior(&p, &[2.0; 3]).unwrap();
            prop_assert_eq!(u.argmax_rows(), p.argmax_rows());
        }

        #[test]
        fn true_weight_satisfies_constraint(ps in priors_strategy()) {
            let mut pt = ps.clone();
            pt.reverse();
            let w = true_weight(&ps, &pt).unwrap();
            prop_assert!((constraint_sum(&w, &ps) - 1.0).abs() < 1e-15);
        }
    }
}
