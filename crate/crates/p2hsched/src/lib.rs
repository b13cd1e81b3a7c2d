//! Scheduling engine for off-grid renewable power-to-hydrogen plants that
//! co-optimizes hydrogen production and frequency-regulation reserves.
//!
//! The crate is organized around a pipeline:
//! devices → frequency dynamics → security constraint compilation →
//! chance-constraint reformulation → MILP assembly → solver I/O →
//! post-solve verification and reporting.

pub mod cli;
pub mod device;
pub mod drcc;
pub mod error;
pub mod freq;
pub mod model;
pub mod scenario;
pub mod report;
pub mod security;
pub mod solution;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
