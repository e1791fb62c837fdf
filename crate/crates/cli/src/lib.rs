//! Library surface of the command-line driver; the commands are exposed so
//! integration tests can run them in-process.

pub mod commands;
pub mod config;
pub mod fields_io;
pub mod mms;
pub mod presets;
pub mod reports;
