//! Handwritten word recognition with a convolutional front end, a two-layer
//! bidirectional recurrent stack and CTC training.
//!
//! The pipeline runs end to end on CPU in double precision:
//!
//! * [`dataset`] turns page manifests into word crops, filters them by length,
//!   builds the character set and splits the corpus. It also synthesizes a
//!   procedural-glyph corpus for desk-scale experiments.
//! * [`imageproc`] resizes crops onto the 50×200 canvas, normalizes them to
//!   `[-1, 1]` and implements the seven augmentation policies.
//! * [`network`] is the recognizer itself with hand-written reverse-mode
//!   gradients.
//! * [`ctc`] holds the CTC loss, its gradient, decoders and enumeration oracles.
//! * [`metrics`] computes edit distances, CER, WER and static FLOP counts.
//! * [`trainer`] runs Adam over shuffled, augmented batches and checkpoints the
//!   model with the lowest validation loss.
//! * [`cli`] wires everything into the `hwr` command.

pub mod cli;
pub mod ctc;
pub mod dataset;
pub mod error;
pub mod imageproc;
pub mod metrics;
pub mod network;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
