//! Command-line front end of the `porofeti` solver.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;
