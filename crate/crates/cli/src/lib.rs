//! Command-line driver: corpus synthesis, the training phases, the full
//! self-training loop, evaluation and the three-way comparison.
//!
//! Every command is a plain function over a resolved [`RunConfig`], so tests
//! can call them without spawning the binary.

pub mod args;
pub mod commands;
pub mod compare;
pub mod config;

use std::path::{Path, PathBuf};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] crlplus_core::Error),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 0 is success; 2 config, 3 data or i/o, 4 degenerate training state,
    /// 5 checkpoint format. Internal contract violations exit with 1.
    pub fn exit_code(&self) -> i32 {
        use crlplus_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Parameter(_) => 2,
                E::Data(_) | E::Dimension(_) | E::Io { .. } => 3,
                E::Degenerate(_) => 4,
                E::Format(_) => 5,
                E::Contract(_) => 1,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}
