//! File formats, command-line tools and HTTP service around `vce-core`.

pub mod bundle;
pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod geojson;
pub mod logio;
pub mod plot;
pub mod service;
pub mod store;

pub use error::{Result, VceError};
