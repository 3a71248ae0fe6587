//! Experiment runner for the `saddleprox` solver.

pub mod commands;
pub mod config;

pub use config::RunConfig;
