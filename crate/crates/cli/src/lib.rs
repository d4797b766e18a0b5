//! Command-line front end: configuration, result bundles and the verbs
//! tying the core modules into reproducible runs.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod schema;

use std::path::{Path, PathBuf};

pub use bundle::ResultBundle;
pub use config::{load, load_str, ConfigError, Overrides, Resolved};

/// Output directory of `command`: `<out>/<command>`, with `out` from the
/// command line, the config, or `results`.
pub fn output_dir(cfg: &Resolved, command: &str) -> PathBuf {
    cfg.output_dir.as_deref().unwrap_or(Path::new("results")).join(command)
}
