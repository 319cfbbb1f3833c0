//! Command-line surface for the torus-quantization library: configuration
//! ingestion, job dispatch, artifact emission, and the seeded invariant
//! suites behind `tq check`.

pub mod check;
pub mod commands;
pub mod config;
pub mod report;
