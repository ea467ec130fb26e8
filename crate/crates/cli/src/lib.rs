//! Batch runner for the likefree-core samplers: configuration files in,
//! plain-text artifacts out.

pub mod artifacts;
pub mod config;
pub mod run;
pub mod summary;

pub use artifacts::{run_to_dir, RunReport};
pub use config::{parse_config, RunConfiguration};
pub use summary::{read_samples, Summary};
