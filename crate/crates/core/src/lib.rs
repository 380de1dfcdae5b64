//! Homogenization of the Neumann p-Laplacian on thin domains with locally periodic
//! oscillating boundaries.

pub mod cell;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod homog1d;
pub mod mesh;
pub mod plap;
pub mod profiles;
pub mod quad;
pub mod thin2d;

pub use error::{Error, Result};
