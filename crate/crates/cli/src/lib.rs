//! Library surface of the command-line front end: scenario files, grid
//! outputs, and the command implementations. The binary in `main.rs` is a
//! thin argument-parsing layer over this.

pub mod commands;
pub mod grid;
pub mod scenario;
