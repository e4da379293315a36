//! MIM-based generative adversarial networks.
//!
//! The crate trains GANs whose discriminator minimises
//! `E[exp(1−D(x))] + E[exp(D(G(z)))]` (and the original, least-squares and
//! Wasserstein baselines), evaluates the closed-form quantities attached to
//! that objective, and uses trained networks to score anomalies.
//!
//! Everything runs on a small in-crate numeric stack: [`tensor`] matrices, a
//! reverse-mode [`autodiff`] tape, [`nn`] perceptrons and [`optim`]isers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod anomaly;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod training;

pub use anomaly::{AnomalyConfig, ScoredSample, Threshold};
pub use data::{SplitMode, TabularDataset};
pub use error::{Error, Result};
pub use nn::{Activation, LayerSpec, MlpModel};
pub use objectives::{DiscreteDist, ObjectiveKind};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use metrics::RocCurve;
pub use tensor::DenseMatrix;
pub use training::{GanConfig, GanRun, TrainingLog};
