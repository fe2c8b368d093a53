//! Transmitter fingerprinting from oversampled QPSK burst headers.
//!
//! The crate is split along the processing chain:
//!
//! - [`sigcore`]: header modulation/demodulation, waveform normalization and
//!   noise scoring.
//! - [`synth`]: synthetic transmitters with hardware impairments, channel
//!   effects, dataset generation and an over-the-wire replay attacker.
//! - [`datapipe`]: the SIQ1 record format, dataset splits, noise filtering and
//!   8x4 triplet batches.
//! - [`model`]: the split I/Q convolutional autoencoder, angular distance,
//!   triplet loss with batch-hard mining, training and checkpoints.
//! - [`verify`]: multi-anchor scoring, ROC/AUC/EER and the evaluation
//!   scenarios.

pub mod datapipe;
pub mod error;
pub mod model;
pub mod sigcore;
pub mod synth;
pub mod verify;

mod fsio;
mod seed;

pub use error::{Error, Result};
pub use fsio::write_atomic;
