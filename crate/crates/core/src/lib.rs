//! Markovian approximations of open quantum system dynamics.
//!
//! The crate builds, analyzes and validates generators for an N-level system
//! coupled linearly to a thermal Bose field: the weak-coupling (Davies)
//! generator with its Lamb shift, the Bohr-sector resonance spectrum and the
//! associated decaying map `W_t`, renormalized generators whose fixed point
//! is the interacting reduced equilibrium state, and an exact finite-mode
//! reservoir oracle used to measure how good each approximation actually is.
//!
//! Modules follow the pipeline order: [`model`] (system/bath data and scalar
//! bath functions), [`davies`] (generator construction and CPT diagnostics),
//! [`resonance`] (level shifts and resonance expansions), [`equilibrium`]
//! (Gibbs states and renormalization), [`dynamics`] (propagation and
//! trajectory comparison), [`oracle`] (exact reference dynamics), [`cli`]
//! (config ingestion and file output).

pub mod cli;
pub mod config;
pub mod davies;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod resonance;
pub mod util;

pub use error::{Error, Result};
