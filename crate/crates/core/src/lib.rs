//! Robust learning of Gaussian mixtures from corrupted samples, at desk scale.

pub mod clustering;
pub mod corruption;
pub mod error;
pub mod gaussian;
pub mod genfun;
pub mod hermite;
pub mod io;
pub mod param;
pub mod pipeline;
pub mod poly;
pub mod pseudoexp;
pub mod robust;
pub mod sdp;

pub use error::{Error, Result};
