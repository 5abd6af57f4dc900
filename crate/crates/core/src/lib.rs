//! Exact-rational workbench for hard-attention transformers and gated
//! convolutional (neural-GPU style) networks: reference machine
//! interpreters, machine-to-weights compilers, and step-by-step verifiers.
//!
//! All arithmetic is exact rational arithmetic in canonical form; there is
//! no floating point anywhere in this crate.

pub mod analysis;
pub mod attention;
pub mod error;
pub mod linalg;
pub mod machines;
pub mod neural_gpu;
pub mod rnn_compiler;
pub mod serde_util;
pub mod tm_compiler;
pub mod transformer;
pub mod verify;

pub use error::{Error, Result};
