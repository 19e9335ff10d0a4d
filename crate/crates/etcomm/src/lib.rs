//! Configuration, checkpoints, metric files, analysis and experiment
//! orchestration on top of `etcomm-core`.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod run;
