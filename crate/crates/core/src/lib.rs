//! Joint radar/communication (ISAC) transceivers on a uniform linear array.
//!
//! - [`scenario`]: array geometry, sectors and the radar/communication channels.
//! - [`baseline`]: least-squares beampattern synthesis, MAPRT detection and QAM decoding.
//! - [`mdlearn`]: the same chain with a trainable steering matrix (model-driven learning).
//! - [`nnlearn`]: a fully neural autoencoder transceiver.
//! - [`harness`]: configuration, threshold calibration, Monte-Carlo evaluation and export.
//! - [`selftest`]: gradient, oracle and invariant checks behind `isac check`.

pub mod baseline;
pub mod error;
pub mod harness;
pub mod mdlearn;
pub mod nnlearn;
pub mod scenario;
pub mod seeding;
pub mod selftest;

pub use error::{IsacError, Result};
