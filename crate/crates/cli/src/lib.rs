//! Experiment harness behind the `evidencenet` binary.

pub mod artifacts;
pub mod config;
pub mod ensemble;
pub mod report;
pub mod runner;
pub mod verify;
