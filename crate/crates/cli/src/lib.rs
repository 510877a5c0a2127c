//! Command-line front end for the colony simulator: configuration,
//! initial data, file formats and the subcommands.

pub mod commands;
pub mod config;
pub mod init;
pub mod io;
