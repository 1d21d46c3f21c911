//! Scenario runners for the `simulate` CLI: configuration, seeded Monte-Carlo
//! trials and CSV/JSON result files.

pub mod error;
pub mod results;
pub mod scenarios;
pub mod spec;

pub use error::{HarnessError, Result};
pub use results::{emit_results, parse_results_csv, parse_results_json, read_results, Format, ResultRecord};
pub use scenarios::{run_scenario, RunOptions, ScenarioOutput};
pub use spec::{load_config, parse_config, LoadedConfig, Overrides, ScenarioName, ScenarioSection, ScenarioSpec};
