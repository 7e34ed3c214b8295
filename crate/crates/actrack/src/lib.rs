//! File formats, evaluation plumbing and the command-line driver around
//! [`actrack_core`].

pub mod commands;
pub mod config;
pub mod io_mot;
pub mod output;

pub use commands::{run, Cli};
