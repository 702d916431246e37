//! File formats, parallel sweeps and the command-line front end for the
//! anodyne simulator. The simulation itself lives in `anodyne-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod sweep;

pub use error::{Error, Result};
