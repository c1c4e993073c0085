//! Study harness and command-line driver for the `rbhmr` reduction pipeline.
//!
//! Studies read a `key = value` configuration, run the offline and online stages, and
//! write CSV tables, SVG plots, basis archives and a manifest to an output directory.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod setup;
pub mod studies;
pub mod svg;
pub mod synthetic;

pub use error::{Error, Result};
