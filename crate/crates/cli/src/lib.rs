//! Scenario-driven front end for `nldamp-core`.

pub mod commands;
pub mod figures;
pub mod metrics;
pub mod runner;
pub mod scenario;
