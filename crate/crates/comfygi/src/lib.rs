//! Backends, run persistence, batch driver, reporting and command line for
//! the workflow optimizer in `comfygi-core`.
//!
//! The core crate is re-exported as [`core`].

pub use comfygi_core as core;

pub mod batch;
pub mod cli;
pub mod comfyui;
pub mod concurrent;
pub mod error;
pub mod files;
mod http;
pub mod ollama;
pub mod report;
pub mod runlog;
pub mod runner;
pub mod scorer;

pub use error::Error;
