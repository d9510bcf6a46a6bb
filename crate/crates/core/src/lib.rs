//! Credibility Transformer core.
//!
//! A self-contained engine for fitting transformer models to tabular
//! claim-count data. The CLS token of the transformer is trained with a
//! Bernoulli credibility gate that alternates between the attention-processed
//! token and a covariate-free prior token, and the attention row of the CLS
//! token decomposes as a linear credibility formula between portfolio and
//! covariate information.
//!
//! The crate is `no_std`-compatible (with `alloc`); all IO, file formats and
//! the command line live in the companion `credtrans-cli` crate.
//!
//! Module map:
//!
//! - [`tensor`]: dense row-major `f64` matrices.
//! - [`autodiff`]: tape-based reverse-mode differentiation and the primitive
//!   op set (matmul, softmax, layer norm, dropout, attention, ...).
//! - [`rng`]: seedable, splittable random streams.
//! - [`tokenizer`]: covariate row -> augmented input tensor (entity/FNN/PLE
//!   embeddings, positional encodings, CLS token, robust scaling, gates).
//! - [`transformer`]: attention and transformer layers, prior CLS path.
//! - [`credibility`]: credibility gate, exponential decoder, attention-row
//!   decomposition.
//! - [`model`]: the assembled Credibility Transformer.
//! - [`training`]: Poisson deviance, optimizers, early-stopped fitting,
//!   ensembling.
//! - [`data`]: datasets, learn/test splits, synthetic Poisson generator.
//! - [`explain`]: CLS attention extraction and aggregation.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod credibility;
pub mod data;
pub mod error;
pub mod explain;
pub mod model;
pub mod num;
pub mod rng;
pub mod tensor;
pub mod tokenizer;
pub mod training;
pub mod transformer;

pub use autodiff::{Activation, NodeId, ParamId, ParamStore, Parameter, Phase, Tape};
pub use error::{Error, Result};
pub use model::{CtModel, ModelConfig, PredictMode};
pub use rng::StreamRng;
pub use tensor::Tensor2;
