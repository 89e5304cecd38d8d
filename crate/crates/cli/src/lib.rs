//! Batch driver for the wavetrain library: configuration, staged pipeline with a content-hash
//! cache, JSON/CSV reports and the acceptance checks.

pub mod checks;
pub mod commands;
pub mod config;
pub mod oracles;
pub mod pipeline;
pub mod report;
pub mod store;
