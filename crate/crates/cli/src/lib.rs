//! Library side of the `torus-mfg` command-line tool: run configs, field
//! files, bundles and the `solve` / `verify` / `export` commands.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod format;
pub mod terms;
