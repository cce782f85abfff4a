//! POTR: a non-autoregressive Transformer for human motion prediction and
//! activity recognition, on a small reverse-mode autodiff engine.
//!
//! The crate is organised bottom-up: [`tensor`] (tensors and the tape),
//! [`nn`] (layers), [`model`] (the pose Transformer, checkpoints, attention
//! export), [`train`], [`metrics`], [`data`] (pose formats and the synthetic
//! generator), [`pipeline`] (raw-space forecasting and evaluation) and
//! [`bench`].

mod binio;
mod error;

pub mod bench;
pub mod data;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod tensor;
pub mod train;

pub use error::{PotrError, Result};
