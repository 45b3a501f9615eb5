//! Command-line harness for the 3D pendulum: config loading, the built-in
//! case library, and CSV/JSON artifacts.

pub mod artifacts;
pub mod config;
pub mod run;
