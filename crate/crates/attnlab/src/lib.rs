//! IO companion to `attnlab-core`: JSON/CSV formats, seeded sample
//! generators, and the command-line interface.

pub mod cli;
pub mod formats;
pub mod sample;
