//! Cascaded extreme-learning-machine joint frame synchronization and channel
//! estimation (JFSCE) over Rician multipath with power-amplifier distortion.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal`] builds training sequences, QPSK payloads, frames and the
//!   cyclic-shift / inter-frame shift-matrix constructions.
//! * [`impairment`] holds the Saleh HPA, EVM measurement and calibration, and AWGN.
//! * [`channel`] draws Rician taps and forms received sample windows.
//! * [`numerics`] has the dense complex kernels (pseudoinverse, least squares,
//!   Toeplitz/convolution/projection matrices).
//! * [`baseline`] implements the projection-metric and cross-correlation + OMP
//!   estimators, which double as feature extractors.
//! * [`elm`] is a generic complex single-hidden-layer ELM.
//! * [`cascade`] trains and deploys the FS-NET / CE-NET pair and the raw ablation.
//! * [`metrics`] reduces trial outcomes to error probability and NMSE.
//! * [`harness`] wires everything into configurable, reproducible sweeps.

pub mod baseline;
pub mod cascade;
pub mod channel;
pub mod elm;
pub mod error;
pub mod harness;
pub mod impairment;
pub mod metrics;
pub mod numerics;
pub mod rng;
pub mod scenario;
pub mod signal;

pub use error::{Error, Result};

/// Complex baseband sample type used throughout.
pub type C64 = num_complex::Complex64;
