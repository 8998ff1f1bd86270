//! File formats and the `seat` command line around [`seat_core`].

pub mod commands;
pub mod config;
pub mod container;
pub mod corpus_io;
pub mod error;
pub mod exec;
pub mod manifest;
pub mod plot;

pub use error::{CliError, Result};
