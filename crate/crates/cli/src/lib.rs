//! Command-line front end for the painfusion pipeline.

pub mod commands;
pub mod config;
