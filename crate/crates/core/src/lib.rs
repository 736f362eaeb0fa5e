//! Multi-rate asynchronous sub-Nyquist sampling (MASS) for wideband spectrum
//! sensing.
//!
//! A wideband signal is sampled by `v` low-rate branches whose sample counts
//! are distinct primes near `√N`. Each branch DFT folds the `N` Nyquist bins
//! modulo its length; stacking the branch magnitudes gives a sparse linear
//! system `y = Φ|X|` that CoSaMP solves for the spectral magnitude, on which
//! per-band energy detection runs.
//!
//! Modules follow the processing chain: [`signal_model`] → [`sampler`] →
//! [`recovery`] → [`detection`], with [`coherence`] for the measurement-matrix
//! guarantees and [`harness`] for scenario files and Monte-Carlo runs.

pub mod coherence;
pub mod detection;
pub mod dft;
pub mod error;
pub mod harness;
pub mod recovery;
pub mod rng;
pub mod sampler;
pub mod signal_model;

pub use error::{MassError, Result};
