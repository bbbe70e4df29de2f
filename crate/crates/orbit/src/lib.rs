//! Command-line front end, file formats and figure reproductions for
//! [`orbit_core`].

pub use orbit_core as core;

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod repro;

pub use error::{CliError, Result};
