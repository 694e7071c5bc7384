//! File formats, reports and the command-line front end around
//! `brainvox-core`.

pub mod cli;
pub mod config;
pub mod container;
pub mod error;
pub mod manifest;
pub mod nifti;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
