use std::collections::BTreeMap;

use super::network::{params, ModelState};
use crate::numkit::{GradMap, Matrix, ParamId};

/// RmsProp with one learning rate for the class-weight logits and another
/// for every other parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub epsilon: f64,
    pub lr_params: f64,
    pub lr_w: f64,
    accumulators: BTreeMap<ParamId, Matrix>,
}

impl RmsProp {
    pub fn new(lr_params: f64, lr_w: f64) -> Self {
        Self {
            decay: 0.9,
            epsilon: 1e-8,
            lr_params,
            lr_w,
            accumulators: BTreeMap::new(),
        }
    }

    pub fn learning_rate(&self, id: ParamId) -> f64 {
        if id == params::CLASS_WEIGHT {
            self.lr_w
        } else {
            self.lr_params
        }
    }

    pub fn accumulator(&self, id: ParamId) -> Option<&Matrix> {
        self.accumulators.get(&id)
    }

    /// `acc <- decay acc + (1 - decay) g^2; p <- p - lr g / sqrt(acc + eps)`.
    pub fn update(&mut self, id: ParamId, param: &mut [f64], grad: &Matrix) {
        assert_eq!(param.len(), grad.len(), "gradient shape for {id:?}");
        let lr = self.learning_rate(id);
        let (decay, eps) = (self.decay, self.epsilon);
        let acc = self
            .accumulators
            .entry(id)
            .or_insert_with(|| Matrix::zeros(grad.rows(), grad.cols()));
        for ((p, a), &g) in param.iter_mut().zip(acc.data_mut()).zip(grad.data()) {
            *a = decay * *a + (1.0 - decay) * g * g;
            *p -= lr * g / (*a + eps).sqrt();
        }
    }

    /// Applies one step to every parameter present in `grads`.
    pub fn step(&mut self, state: &mut ModelState, grads: &GradMap) {
        for (id, g) in grads.iter() {
            if let Some(p) = state.param_mut(id) {
                self.update(id, p, g);
            }
        }
    }
}
