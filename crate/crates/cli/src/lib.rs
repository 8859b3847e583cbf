//! Command-line front end for hetsoc societies.

pub mod commands;
pub mod serve;
