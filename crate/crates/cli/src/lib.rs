//! Command implementations behind the `coadain` binary.

pub mod config;
pub mod eval;
pub mod gallery;
pub mod images;
pub mod train;
pub mod translate;
