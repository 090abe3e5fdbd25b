//! Run configuration for the `infconv` command-line tool.

pub mod config;
