//! Experiment files, paper presets, execution and CSV export for `streamal`.

pub mod command;
pub mod config;
pub mod export;
pub mod presets;

pub use command::{execute, run_command, CommandError, Outcome};
pub use config::{parse_config, serialize, ConfigError, ExperimentSpec};
pub use export::{export_csv, parse_csv};
pub use presets::{preset, presets, Preset};
