//! Library surface of the command-line driver, exposed so integration tests
//! can exercise configuration handling directly.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Error classes aligned with the process exit codes: configuration problems
/// exit 1, stability violations exit 2, runtime assertion failures exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Stability(String),
    #[error("{0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Stability(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
}

/// Thread cap from `BREAKFVM_THREADS`; 0 or unset means automatic.
pub fn configure_threads() {
    if let Ok(raw) = std::env::var("BREAKFVM_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}
