//! Percolation clusters, isoperimetry, random walks and harmonic functions
//! on finite boxes of `Z^d`.

pub mod cluster;
pub mod error;
pub mod harmonic;
pub mod events;
pub mod inequality;
pub mod linalg;
pub mod par;
pub mod percolation;
pub mod rng;
pub mod verify;
pub mod walk;

pub use error::{Error, Result};
