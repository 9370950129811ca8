//! Event-driven simulator for zero-temperature majority-rule spin dynamics
//! on finite lattice regions.
//!
//! The crate provides:
//!
//! - [`geometry`]: hypercubes, discrete balls, polylog cylinders, nested
//!   shrunk sets, shells and slab systems with their boundary conditions;
//! - [`randomness`]: reproducible clock/coin event streams shared across
//!   coupled dynamics;
//! - [`dynamics`]: the majority-rule update with censoring filters, run
//!   either by replaying the event stream or by a rejection-free engine;
//! - [`coupling`]: pathwise verification of monotone domination, censoring
//!   domination and slab-to-shell slice decoupling;
//! - [`experiments`]: hitting-time campaigns, mixing-time estimation,
//!   scaling-law fits and result persistence;
//! - [`stats`]: the small statistical toolbox backing the above.

pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod randomness;
pub mod stats;

pub use error::{Error, Result};
