//! Control synthesis for the 1D Schrödinger equation with weight-type and
//! electric-field potentials and a Hartree nonlocal term.

pub mod airy;
pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod field;
pub mod hartree;
pub mod hum;
pub mod io;
pub mod nonlinear;
pub mod propagate;
pub mod spectral;
pub mod stats;
pub mod tridiag;
pub mod verify;

pub use error::{Error, Result};
pub use field::{WaveField, C64};
