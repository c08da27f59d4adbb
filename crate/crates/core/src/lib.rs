//! Device-independent randomness certification from multi-round Bell data.
//!
//! The crate turns the raw record of a Bell experiment (inputs and outputs of
//! `n` successive uses of an untrusted device) into a certified bound on the
//! min-entropy of the output string, valid against classical side information.
//! The pipeline is:
//!
//! 1. [`bell`] — scenarios, behaviors, Bell expressions and frequency tables;
//! 2. [`estimation`] — Bell estimators and Azuma-Hoeffding confidence regions;
//! 3. [`npa`] — moment-matrix outer relaxations of the quantum behavior cone;
//! 4. [`gp`] — guessing-probability conic programs, dual Bell witnesses and
//!    the statistical-fluctuation constants;
//! 5. [`protocol`] — the end-to-end certification protocol, threshold logic,
//!    Toeplitz extraction and simulation campaigns;
//! 6. [`quantum`] — qubit device models and reproducible transcript sampling.
//!
//! All value types are immutable after construction and safe to share across
//! threads; campaign evaluation parallelizes over cells with rayon.

pub mod bell;
pub mod error;
pub mod estimation;
pub mod extractor;
pub mod gp;
pub mod io;
pub mod npa;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod sdp;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
