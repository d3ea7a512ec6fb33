//! Domain-invariant representation learning under label shift.
//!
//! The crate implements two families of domain-invariant representation
//! learning (moment matching with the central moment discrepancy, and
//! domain-adversarial training with a gradient-reversal layer) together with
//! their class-weighted counterparts. The weighted models reweigh the source
//! classes by a trainable vector `w` with `w_i > 0` and `sum_i w_i P_S(y=i) = 1`
//! before matching feature distributions, then correct the source posterior
//! with the same weights when predicting on the target domain.
//!
//! Module map:
//!
//! - [`numkit`]: dense matrices and a small reverse-mode tape.
//! - [`losses`]: CMD, adversarial domain loss, and their class-weighted forms.
//! - [`classweight`]: the constrained class weight and posterior correction.
//! - [`model`]: encoder/classifier/discriminator, RmsProp, and the training loop.
//! - [`data`]: sparse datasets, task construction, synthetic Gaussian tasks.
//! - [`gradcheck`]: finite-difference verification of every differentiable op.
//! - [`experiment`]: config-driven experiment runs emitting CSV.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classweight;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod numkit;

pub use classweight::ClassWeight;
pub use error::{Error, Result};
pub use model::{TrainConfig, Variant};
pub use numkit::{Matrix, Tape};
