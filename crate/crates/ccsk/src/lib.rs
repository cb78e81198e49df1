//! Simulator for an M-ary chaos shift keying system built on combined
//! chaotic sequences (CCS-M-CSK).
//!
//! A transmitted frame of `beta` samples hides a short Cubic-map segment
//! (length `k`) at one of `M` window positions inside a longer Logistic-map
//! cover sequence; the window position carries a Gray-coded symbol. The
//! receiver scores every window with a detector (a trained BiLSTM +
//! self-attention classifier, or a classical map-residual test) and decides
//! the symbol by argmax.
//!
//! The crate is organised along the signal path:
//!
//! - [`chaos`] — the two chaotic maps, segment generation, standardization
//! - [`modem`] — Gray coding, symbol-to-position mapping, frame assembly
//! - [`channel`] — AWGN / two-path Rayleigh fading, Eb/N0 accounting,
//!   receive-window misalignment
//! - [`receiver`] — window splitting, detectors, argmax symbol decisions
//! - [`neural`] — the window classifier: forward/backward passes, Adam
//!   training loop, dataset generation, checkpoints, complexity estimate
//! - [`security`] — information-leakage rate and the eavesdropper experiment
//! - [`dcsk`] — classical DCSK correlation baseline for BER comparison
//! - [`harness`] — Monte Carlo sweeps, CSV persistence, deterministic seeding
//!
//! All numeric kernels are generic over the scalar type through [`Real`];
//! the crate-level aliases fix the default precision used by the CLI and
//! the experiments.

pub mod chaos;
pub mod channel;
pub mod dcsk;
pub mod error;
pub mod harness;
pub mod modem;
pub mod neural;
pub mod real;
pub mod receiver;
pub mod rng;
pub mod security;

pub use error::{Error, Result};
pub use real::Real;

/// Default scalar for transmitted samples and all shipped experiments.
pub type Sample = f64;

/// Network parameters at the default precision.
pub type Net = neural::NetParams<Sample>;

/// Detector at the default precision.
pub type DefaultDetector = receiver::Detector<Sample>;
