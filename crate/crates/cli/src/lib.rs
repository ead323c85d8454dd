//! IO, file formats, benchmark harness and command implementations for the
//! range-view detection pipeline. The algorithmic core lives in
//! [`rvdet_core`]; this crate adds everything that needs the standard
//! library: files, timing, and the CLI.

pub mod bench;
pub mod commands;
pub mod config;
pub mod formats;
pub mod pipeline;
