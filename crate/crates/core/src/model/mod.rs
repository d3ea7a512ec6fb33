//! Encoder `G`, classifier `f`, domain discriminator `D`, the RmsProp
//! optimizer, and the training loop for all nine model variants.
//!
//! | variant  | invariance loss            | class weight        | posterior correction |
//! |----------|----------------------------|---------------------|----------------------|
//! | `SO`     | none                       | none                | no                   |
//! | `CMD`    | CMD                        | none                | no                   |
//! | `CMD+`   | weighted CMD               | learned             | no                   |
//! | `CMD++`  | weighted CMD               | learned             | yes                  |
//! | `CMD*`   | weighted CMD               | fixed at `w*`       | yes                  |
//! | `DANN`   | adversarial                | none                | no                   |
//! | `DANN+`  | weighted adversarial       | learned             | no                   |
//! | `DANN++` | weighted adversarial       | learned             | yes                  |
//! | `DANN*`  | weighted adversarial       | fixed at `w*`       | yes                  |
//!
//! `+` and `++` may also be written with daggers (`CMD†`, `CMD††`).

mod network;
mod optim;
mod sampler;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use network::{forward_classify, forward_discriminate, forward_encode, params, Architecture, Dense, ModelState};
pub use optim::RmsProp;
pub use sampler::{stratified_counts, StratifiedSampler, TargetSampler};
pub use train::{
    evaluate, initial_weight_from, predict_posterior, predict_target, target_posterior, train, train_with_initial_weight, EpochRecord,
    RunRecord,
};
pub(crate) use train::{record_objective, StepBatch};

use crate::error::{Error, Result};
use crate::losses::{MixtureCentering, DEFAULT_ORDER};

/// Distribution-matching family of a variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    SourceOnly,
    Cmd,
    Dann,
}

/// Where the class weight of a variant comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Weighting {
    None,
    Learned,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    So,
    Cmd,
    CmdWeighted,
    CmdCorrected,
    CmdOracle,
    Dann,
    DannWeighted,
    DannCorrected,
    DannOracle,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::So,
        Variant::Cmd,
        Variant::CmdWeighted,
        Variant::CmdCorrected,
        Variant::CmdOracle,
        Variant::Dann,
        Variant::DannWeighted,
        Variant::DannCorrected,
        Variant::DannOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::So => "SO",
            Variant::Cmd => "CMD",
            Variant::CmdWeighted => "CMD+",
            Variant::CmdCorrected => "CMD++",
            Variant::CmdOracle => "CMD*",
            Variant::Dann => "DANN",
            Variant::DannWeighted => "DANN+",
            Variant::DannCorrected => "DANN++",
            Variant::DannOracle => "DANN*",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Variant::So => Family::SourceOnly,
            Variant::Cmd | Variant::CmdWeighted | Variant::CmdCorrected | Variant::CmdOracle => Family::Cmd,
            _ => Family::Dann,
        }
    }

    pub fn weighting(self) -> Weighting {
        match self {
            Variant::CmdWeighted | Variant::CmdCorrected | Variant::DannWeighted | Variant::DannCorrected => {
                Weighting::Learned
            }
            Variant::CmdOracle | Variant::DannOracle => Weighting::Oracle,
            _ => Weighting::None,
        }
    }

    /// Whether target predictions go through the posterior correction.
    pub fn corrects_posterior(self) -> bool {
        matches!(
            self,
            Variant::CmdCorrected | Variant::CmdOracle | Variant::DannCorrected | Variant::DannOracle
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ascii = s.trim().to_ascii_uppercase().replace('†', "+");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == ascii)
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name().to_string()
    }
}

/// How learned class weights are initialised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// Mean source-only target posterior over source class frequency.
    #[default]
    SourceOnly,
    /// `w = 1`.
    Uniform,
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Weight of the invariance loss. Ignored by `SO`.
    pub alpha: f64,
    pub moment_order: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Target rows per step; defaults to `batch_size`.
    pub target_batch_size: Option<usize>,
    pub lr_params: f64,
    pub lr_w: f64,
    pub seed: u64,
    /// Report the best per-epoch target test accuracy instead of the last.
    pub report_best: bool,
    pub hidden_dim: usize,
    pub disc_hidden: usize,
    pub centering: MixtureCentering,
    pub w_init: WeightInit,
    /// Epochs of the source-only run behind [`WeightInit::SourceOnly`];
    /// defaults to `epochs`.
    pub w_init_epochs: Option<usize>,
    pub grl_lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::So,
            alpha: 1.0,
            moment_order: DEFAULT_ORDER,
            epochs: 100,
            batch_size: 128,
            target_batch_size: None,
            lr_params: 0.005,
            lr_w: 0.01,
            seed: 0,
            report_best: true,
            hidden_dim: 50,
            disc_hidden: 50,
            centering: MixtureCentering::default(),
            w_init: WeightInit::default(),
            w_init_epochs: None,
            grl_lambda: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// `alpha` as used by the objective: zero for the source-only model.
    pub fn effective_alpha(&self) -> f64 {
        if self.variant == Variant::So {
            0.0
        } else {
            self.alpha
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size < num_classes.max(1) {
            return Err(Error::config(
                "batch_size",
                format!("must be at least the number of classes ({num_classes})"),
            ));
        }
        if self.target_batch_size == Some(0) {
            return Err(Error::config("target_batch_size", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be finite and >= 0"));
        }
        if self.moment_order == 0 {
            return Err(Error::config("moment_order", "must be at least 1"));
        }
        for (name, lr) in [("lr_params", self.lr_params), ("lr_w", self.lr_w)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.hidden_dim == 0 || self.disc_hidden == 0 {
            return Err(Error::config("hidden_dim", "layer widths must be at least 1"));
        }
        if self.w_init_epochs == Some(0) {
            return Err(Error::config("w_init_epochs", "must be at least 1"));
        }
        if !(self.grl_lambda >= 0.0 && self.grl_lambda.is_finite()) {
            return Err(Error::config("grl_lambda", "must be finite and >= 0"));
        }
        Ok(())
    }
}
