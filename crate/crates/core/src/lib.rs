//! Behavioral simulator for adaptive compressive sensing on stochastic
//! multibit SOT-MRAM crossbars.
//!
//! Layering, bottom up: [`device`] (nanomagnet cells and switching),
//! [`crossbar`] (arrays, VMM, WTA), [`matrix`] (measurement-matrix
//! generation and programming), [`cs`] (signals, sampling, recovery,
//! metrics), [`adaptive`] (energy-governed matrix updates), [`energy`]
//! (energy and area accounting) and [`harness`] (Monte Carlo experiments).

pub mod adaptive;
pub mod crossbar;
pub mod cs;
pub mod device;
pub mod energy;
pub mod error;
pub mod exec;
pub mod harness;
pub mod matrix;
pub mod rng;

pub use error::{Error, Result};
