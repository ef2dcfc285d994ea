//! Command-line front end: scenario configs, commands and run manifests.

pub mod cli;
pub mod commands;
pub mod config;
pub mod failure;
pub mod manifest;

pub use failure::Failure;
