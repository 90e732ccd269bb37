//! Screening pipeline for ultra-widefield fundus images.
//!
//! The crate covers the full desk-scale path from raw image bytes to a
//! metrics report:
//!
//! - [`imaging`]: NetPBM P6 codec plus the deterministic preprocessing chain
//!   (center crop, bilinear resize, Gaussian local-mean color normalization).
//! - [`augment`]: seed-derived training augmentation and the fixed
//!   test-time-augmentation view set.
//! - [`nnet`]: a small tensor engine with manual backpropagation, the MiniNet
//!   backbone with an optional multilevel feature head, cross-entropy, Adam,
//!   exponential LR decay, and early stopping.
//! - [`metrics`]: exact rank-based AUROC, average-precision AUPRC, ROC/PR
//!   curves, and confusion statistics.
//! - [`orchestrate`]: manifests, stratified k-fold cross-validation, top-k
//!   model selection, ensemble/TTA inference, and fine-tuning.
//! - [`synth`]: synthetic blob/ring datasets for end-to-end verification.
//!
//! Every operation is a pure function of its inputs and an explicit seed:
//! identical inputs produce bit-identical outputs, including serialized
//! models and reports.

pub mod augment;
pub mod cli;
pub mod imaging;
pub mod kv;
pub mod metrics;
pub mod nnet;
pub mod orchestrate;
pub mod synth;

pub use imaging::{Image, PreprocessConfig};
pub use nnet::{ArchDescriptor, ArchVariant, ModelParams, Tensor, TrainConfig};
