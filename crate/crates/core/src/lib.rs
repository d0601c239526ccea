//! Modeling and parameter extraction for a multimode surface-acoustic-wave
//! cavity coupled to a flux-tunable nonlinear (Kerr) ancilla resonator.
//!
//! The crate covers the full loop from device description to measured data
//! and back:
//!
//! - [`model`] — device description (bare acoustic modes, ancilla, flux
//!   tuning curve) and construction of the coupled quadratic forms;
//! - [`bogoliubov`] — normal-mode decomposition of the coupled system, both
//!   in the excitation-conserving approximation and with the full symplectic
//!   transformation, plus hybrid participation ratios, inherited dissipation
//!   and Kerr matrices;
//! - [`ed`] — exact diagonalization of a level-truncated nonlinear model and
//!   an acoustic-qubit design study built on it;
//! - [`scattering`] — microwave line shapes, steady-state response of the
//!   driven Kerr mode, acoustic emission rates, and synthetic flux-sweep
//!   maps with reproducible noise;
//! - [`fitting`] — peak extraction and the nonlinear least-squares
//!   protocols used to recover couplings, dissipation rates and Kerr
//!   coefficients from (synthetic or measured) sweeps.
//!
//! Internally every rate and frequency is an angular frequency in rad/s;
//! serialized interfaces use plain Hz (fields suffixed `_hz`), volts and
//! dBm, converted at the boundary. See [`units`] for helpers.
//!
//! With the default `parallel` feature, sweeps over tuning or design grids
//! fan out over a rayon thread pool; disabling the feature yields a fully
//! sequential build with identical results.

pub mod bogoliubov;
pub mod ed;
pub mod error;
pub mod fitting;
pub mod model;
pub mod par;
pub mod presets;
pub mod scattering;
pub mod units;

pub use error::{Error, Result};
