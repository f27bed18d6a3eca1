//! Density-based topology optimization on structured 2D grids with an
//! automatic continuation scheme for the threshold-projection sharpness.

pub mod continuation;
pub mod error;
pub mod fea;
pub mod mesh;
pub mod optimize;
pub mod problems;
pub mod runner;
pub mod threefield;

pub use error::{Error, Result};
