//! Scenario runner: configuration, experiments and their reports.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod report;
