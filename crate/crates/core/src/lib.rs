//! Residual policy adaptation for contact-rich planar insertion.

pub mod base;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geom;
pub mod kv;
pub mod nn;
pub mod residual;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
