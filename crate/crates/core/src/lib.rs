//! Few-shot keyword spotting toolkit.
//!
//! The pipeline: extract 1-second keyword clips from word-level alignment
//! data, train a convolutional keyword classifier whose penultimate
//! activations serve as a language-agnostic embedding, fine-tune 3-class
//! keyword heads from five examples on the frozen embedding, and evaluate
//! both clip classification (ROC / F1) and streaming detection (TPR / FAR).

pub mod audio;
pub mod augment;
pub mod dataset;
pub mod error;
pub mod fewshot;
pub mod fingerprint;
pub mod model;
pub mod nn;
pub mod streaming;
pub mod synth;

pub use error::{Error, Result};
