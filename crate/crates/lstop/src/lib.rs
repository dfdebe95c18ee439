//! IO, file formats, parallel execution, and the command-line front end for
//! the sparse-recovery stopping models in `lstop-core`.

pub mod cli;
pub mod commands;
pub mod formats;
pub mod parallel;
pub mod report;
