use rand::Rng;

use crate::classweight::ClassWeight;
use crate::error::{Error, Result};
use crate::numkit::{Matrix, NodeId, ParamId, Tape};

/// Parameter ids used on the tape and by the optimizer.
pub mod params {
    use crate::numkit::ParamId;

    pub const ENCODER_W: ParamId = ParamId(0);
    pub const ENCODER_B: ParamId = ParamId(1);
    pub const CLASSIFIER_W: ParamId = ParamId(2);
    pub const CLASSIFIER_B: ParamId = ParamId(3);
    pub const DISC_HIDDEN_W: ParamId = ParamId(4);
    pub const DISC_HIDDEN_B: ParamId = ParamId(5);
    pub const DISC_OUT_W: ParamId = ParamId(6);
    pub const DISC_OUT_B: ParamId = ParamId(7);
    pub const CLASS_WEIGHT: ParamId = ParamId(8);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub disc_hidden: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 || self.disc_hidden == 0 {
            return Err(Error::contract(format!("architecture dims must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// Affine layer `x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    /// Uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weight: Matrix::random_uniform(fan_in, fan_out, bound, rng),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight)?.add_row(&self.bias)
    }

    fn record(&self, tape: &mut Tape, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let wn = tape.param(w, self.weight.clone());
        let bn = tape.param(b, self.bias.clone());
        let xw = tape.matmul(x, wn)?;
        tape.add(xw, bn)
    }
}

/// All trainable state of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub arch: Architecture,
    pub encoder: Dense,
    pub classifier: Dense,
    pub disc_hidden: Dense,
    pub disc_out: Dense,
    pub class_weight: ClassWeight,
    pub rng_seed: u64,
}

impl ModelState {
    pub fn init<R: Rng + ?Sized>(arch: Architecture, class_weight: ClassWeight, rng_seed: u64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        if class_weight.num_classes() != arch.num_classes {
            return Err(Error::contract(format!(
                "class weight has {} classes, architecture {}",
                class_weight.num_classes(),
                arch.num_classes
            )));
        }
        Ok(Self {
            encoder: Dense::glorot(arch.input_dim, arch.hidden_dim, rng),
            classifier: Dense::glorot(arch.hidden_dim, arch.num_classes, rng),
            disc_hidden: Dense::glorot(arch.hidden_dim, arch.disc_hidden, rng),
            disc_out: Dense::glorot(arch.disc_hidden, 1, rng),
            arch,
            class_weight,
            rng_seed,
        })
    }

    /// Every parameter set to zero and `w = 1`.
    pub fn zeros(arch: Architecture, source_priors: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            encoder: Dense::zeros(arch.input_dim, arch.hidden_dim),
            classifier: Dense::zeros(arch.hidden_dim, arch.num_classes),
            disc_hidden: Dense::zeros(arch.hidden_dim, arch.disc_hidden),
            disc_out: Dense::zeros(arch.disc_hidden, 1),
            class_weight: ClassWeight::uniform(source_priors)?,
            arch,
            rng_seed: 0,
        })
    }

    /// Mutable view of a parameter's entries.
    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut [f64]> {
        use params::*;
        Some(match id {
            ENCODER_W => self.encoder.weight.data_mut(),
            ENCODER_B => self.encoder.bias.data_mut(),
            CLASSIFIER_W => self.classifier.weight.data_mut(),
            CLASSIFIER_B => self.classifier.bias.data_mut(),
            DISC_HIDDEN_W => self.disc_hidden.weight.data_mut(),
            DISC_HIDDEN_B => self.disc_hidden.bias.data_mut(),
            DISC_OUT_W => self.disc_out.weight.data_mut(),
            DISC_OUT_B => self.disc_out.bias.data_mut(),
            CLASS_WEIGHT => self.class_weight.logits_mut(),
            _ => return None,
        })
    }

    pub fn all_finite(&self) -> bool {
        [&self.encoder, &self.classifier, &self.disc_hidden, &self.disc_out]
            .iter()
            .all(|l| l.weight.all_finite() && l.bias.all_finite())
            && self.class_weight.logits().iter().all(|v| v.is_finite())
    }

    /// `sigmoid(x W_G + b_G)` on the tape.
    pub fn record_encoder(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let z = self.encoder.record(tape, x, params::ENCODER_W, params::ENCODER_B)?;
        Ok(tape.sigmoid(z))
    }

    /// Classifier logits `h W_f + b_f`; the softmax is applied by the loss.
    pub fn record_classifier_logits(&self, tape: &mut Tape, h: NodeId) -> Result<NodeId> {
        self.classifier.record(tape, h, params::CLASSIFIER_W, params::CLASSIFIER_B)
    }

    /// `sigmoid(relu(h W_1 + b_1) W_2 + b_2)` on the tape.
    pub fn record_discriminator(&self, tape: &mut Tape, h: NodeId) -> Result<NodeId> {
        let z = self.disc_hidden.record(tape, h, params::DISC_HIDDEN_W, params::DISC_HIDDEN_B)?;
        let a = tape.relu(z);
        let o = self.disc_out.record(tape, a, params::DISC_OUT_W, params::DISC_OUT_B)?;
        Ok(tape.sigmoid(o))
    }
}

fn check_cols(op: &'static str, x: &Matrix, expected: usize) -> Result<()> {
    if x.cols() != expected {
        return Err(Error::Dimension {
            op,
            left: x.shape(),
            right: (expected, 0),
        });
    }
    Ok(())
}

/// `sigmoid(x W_G + b_G)`, entries in `(0, 1)`.
pub fn forward_encode(state: &ModelState, x: &Matrix) -> Result<Matrix> {
    check_cols("forward_encode", x, state.arch.input_dim)?;
    Ok(state.encoder.forward(x)?.sigmoid())
}

/// `softmax(h W_f + b_f)`; rows sum to one.
pub fn forward_classify(state: &ModelState, h: &Matrix) -> Result<Matrix> {
    check_cols("forward_classify", h, state.arch.hidden_dim)?;
    Ok(state.classifier.forward(h)?.softmax_rows())
}

/// Probability that each row of `h` comes from the source domain.
pub fn forward_discriminate(state: &ModelState, h: &Matrix) -> Result<Matrix> {
    check_cols("forward_discriminate", h, state.arch.hidden_dim)?;
    let a = state.disc_hidden.forward(h)?.relu();
    Ok(state.disc_out.forward(&a)?.sigmoid())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch() -> Architecture {
        Architecture {
            input_dim: 2,
            hidden_dim: 2,
            num_classes: 2,
            disc_hidden: 3,
        }
    }

    #[test]
    fn zero_state_outputs() {
        let s = ModelState::zeros(arch(), vec![0.5, 0.5]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0], [3.0, 0.5]]).unwrap();
        let h = forward_encode(&s, &x).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.5));
        let p = forward_classify(&s, &h).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.5));
        let d = forward_discriminate(&s, &h).unwrap();
        assert_eq!(d.shape(), (2, 1));
        assert!(d.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hand_set_encoder() {
        let mut s = ModelState::zeros(arch(), vec![0.5, 0.5]).unwrap();
        s.encoder.weight = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap();
        s.encoder.bias = Matrix::row_vector(&[0.1, -0.2]);
        let x = Matrix::row_vector(&[1.0, 2.0]);
        let h = forward_encode(&s, &x).unwrap();
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let expected = [sig(0.5 + 4.0 + 0.1), sig(-1.0 + 0.5 - 0.2)];
        for (a, b) in h.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let s = ModelState::zeros(arch(), vec![0.5, 0.5]).unwrap();
        let x = Matrix::zeros(1, 3);
        assert!(matches!(forward_encode(&s, &x), Err(Error::Dimension { .. })));
        assert!(matches!(forward_classify(&s, &x), Err(Error::Dimension { .. })));
        assert!(matches!(forward_discriminate(&s, &x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn random_outputs_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Architecture {
            input_dim: 4,
            hidden_dim: 6,
            num_classes: 3,
            disc_hidden: 5,
        };
        let cw = ClassWeight::uniform(vec![0.2, 0.3, 0.5]).unwrap();
        let s = ModelState::init(a, cw, 1, &mut rng).unwrap();
        let x = Matrix::random_uniform(20, 4, 5.0, &mut rng);
        let h = forward_encode(&s, &x).unwrap();
        assert!(h.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let p = forward_classify(&s, &h).unwrap();
        for row in p.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let d = forward_discriminate(&s, &h).unwrap();
        assert!(d.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = Dense::glorot(10, 5, &mut rng);
        let bound = (6.0f64 / 15.0).sqrt();
        assert!(l.weight.data().iter().all(|v| v.abs() <= bound));
        assert!(l.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tape_matches_value_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cw = ClassWeight::uniform(vec![0.5, 0.5]).unwrap();
        let s = ModelState::init(arch(), cw, 3, &mut rng).unwrap();
        let x = Matrix::random_uniform(7, 2, 2.0, &mut rng);
        let mut tape = Tape::new();
        let xn = tape.constant(x.clone());
        let h = s.record_encoder(&mut tape, xn).unwrap();
        let logits = s.record_classifier_logits(&mut tape, h).unwrap();
        let d = s.record_discriminator(&mut tape, h).unwrap();
        let hv = forward_encode(&s, &x).unwrap();
        assert!(tape.value(h).max_abs_diff(&hv) < 1e-15);
        let p = tape.value(logits).softmax_rows();
        assert!(p.max_abs_diff(&forward_classify(&s, &hv).unwrap()) < 1e-15);
        assert!(tape.value(d).max_abs_diff(&forward_discriminate(&s, &hv).unwrap()) < 1e-15);
    }
}
