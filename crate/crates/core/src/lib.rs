//! Finite-time iterative learning control with learning matrices built from
//! the inverse of a plant's steady-state frequency response.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod fir;
pub mod io;
pub mod law;
pub mod lifted;
pub mod lti;
pub mod pipeline;
pub mod repro;
pub mod runner;
pub mod tuner;

pub use error::{IlcError, Result};
