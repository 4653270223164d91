//! Library surface of the command-line driver; the binary is a thin
//! wrapper over these modules, and integration tests exercise them
//! directly.

pub mod commands;
pub mod config;
pub mod output;
