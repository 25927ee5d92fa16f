//! Sparse regression with a hidden binary attribute that biases the response.

pub mod altopt;
pub mod cli;
pub mod dataio;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fairlasso;
pub mod numkit;
pub mod synthgen;
pub mod zstep;

pub use error::{Error, Result};
