//! Library side of the experiment runner, exposed so integration tests can
//! drive the pipeline without shelling out.

pub mod config;
pub mod runner;
pub mod tables;

pub type Result<T> = anyhow::Result<T>;
