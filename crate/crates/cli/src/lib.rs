//! Config-driven experiment runner for `hermite-core`.

pub mod config;
pub mod identities;
pub mod output;
pub mod run;

pub use config::{load_file, load_str, Command, ExperimentConfig, Loaded, Overrides};
pub use run::{execute, run, Outcome};

/// Exit status for a run whose hard assertions all hold.
pub const EXIT_PASS: i32 = 0;
/// Exit status when a pathwise inequality or identity check fails.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for invalid input.
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("malformed config: {0}")]
    Config(String),

    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error(transparent)]
    Core(#[from] hermite_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
