//! File formats, the synthetic fixture and the `qpp` command line on top of
//! [`qpp_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod fixture;
pub mod ingest;
pub mod report;
pub mod table;

pub use error::{Error, Result};
pub use qpp_core as core;
