//! Batch pipeline around `n400-core`: configuration, file formats, the
//! train / surprisal / analyze stages and the report bundle.

pub mod app;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;
pub mod report;
pub mod stages;
pub mod synth;
