//! Reduced dynamics of the spin-boson model.
//!
//! Two propagation schemes share the same system and bath description:
//! [`quapi`] iterates a finite-memory table of discrete paths, and
//! [`debpi`] evolves continuous path-segment amplitudes with a PDE
//! solver. [`harness`] wires both to presets, CSV output and comparisons.

pub mod bath;
pub mod debpi;
pub mod error;
pub mod harness;
pub mod pathgrid;
pub mod quapi;
pub mod spinsys;

pub use error::{Error, Result};
