//! Quantum battery charging by a three-level heat engine.
//!
//! Dense operators on tensor-product spaces, Lindblad evolution, the
//! symmetric-subspace reduction of collectively coupled batteries and the
//! closed-form steady-state and charging metrics.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod lindblad;
pub mod models;
pub mod ode;
pub mod operator;
mod sparse;
pub mod symmetric;

pub use error::{Error, Result};
