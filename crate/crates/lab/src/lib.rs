//! Scenario-driven front end for `agf-core`: configuration files, presets,
//! parallel drivers, CSV artifacts and output comparison.

pub mod compare;
pub mod error;
pub mod expr;
pub mod output;
pub mod parallel;
pub mod run;
pub mod scenario;

pub use compare::{compare_outputs, CompareReport};
pub use error::LabError;
pub use run::{run_scenario, RunOptions, RunReport};
pub use scenario::{preset, validate_config, Scenario};
