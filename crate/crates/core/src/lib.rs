//! Desk-scale simulator for a reconfigurable, continuously-coupled photonic
//! boson sampler.
//!
//! The crate covers the whole chain: synthesis of the device transformation
//! from a heater power vector, exact and rival multi-photon samplers,
//! Haar-randomness benchmarks, sequential validation counters, unitary
//! reconstruction from photon counts, and a randomness extraction pipeline
//! (Von Neumann unbiasing, min-entropy estimate, SHA-256 conditioning and the
//! SP 800-22 battery).

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod device;
pub mod error;
pub mod experiment;
pub mod permanent;
pub mod randomness;
pub mod reconstruction;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod unitary;
pub mod validation;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use permanent::{permanent, permanent_with_multiplicity, PermanentAlgorithm, PermanentValue};
pub use unitary::{expm_hermitian, haar_unitary, ComplexMatrix, Provenance, UnitaryMatrix};
