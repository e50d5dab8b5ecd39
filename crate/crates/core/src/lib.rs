//! A from-scratch tiny CNN for binary defect classification of casting images.
//!
//! The crate covers the whole pipeline for a channel-pruned, grayscale-input
//! classifier ("CastNet-Tiny"):
//!
//! - [`tensor`]: NHWC tensor type and hand-derived forward/backward kernels.
//! - [`dataio`]: on-disk loader, grayscale conversion, splits, batching and a
//!   synthetic impeller generator.
//! - [`augment`]: flips, rotation, zoom and ZCA whitening.
//! - [`model`]: layer specs, inference, parameter accounting and the CNET1
//!   weight format.
//! - [`train`]: binary cross-entropy training with early stopping and
//!   learning-rate reduction on plateau.
//! - [`eval`]: confusion matrix and accuracy/precision/recall/F1.
//! - [`bench`]: single-threaded CPU latency protocol and ratio tables.
//! - [`cli`]: the `castnet` command line.
//!
//! # Quick start
//!
//! ```no_run
//! use castnet::dataio::{synth_generate, split_train_val, DatasetSplit};
//! use castnet::model::ModelSpec;
//! use castnet::train::{fit, TrainConfig};
//! use castnet::eval::{evaluate, DatasetTag};
//!
//! # fn main() -> castnet::Result<()> {
//! let records = synth_generate(400, 0.5, 64, 7)?;
//! let test = synth_generate(100, 0.5, 64, 8)?;
//! let (train, validation) = split_train_val(records, 0.2, 7)?;
//! let split = DatasetSplit { train, validation, test, seed: 7 };
//!
//! let spec = ModelSpec::castnet_tiny((64, 64, 1))?;
//! let outcome = fit(&spec, &split, &TrainConfig::desk_scale(7))?;
//! let report = evaluate(&outcome.model, &split.test, DatasetTag::Standard, "castnet-tiny")?;
//! println!("f1 = {:.4}", report.f1);
//! # Ok(())
//! # }
//! ```

pub mod augment;
pub mod bench;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
