//! File formats and command implementations behind the `antifrag` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod heatmap;
pub mod seeds;
pub mod table;
