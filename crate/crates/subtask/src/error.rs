use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, AppError>;

/// Where in a file a format error was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(u64),
    Line(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte {}", b),
            Location::Line(l) => write!(f, "line {}", l),
        }
    }
}

/// A malformed buffer, before it is tied to a path.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{at}: {msg}")]
pub struct FormatError {
    pub at: Location,
    pub msg: String,
}

impl FormatError {
    pub fn byte(offset: u64, msg: impl Into<String>) -> Self {
        Self {
            at: Location::Byte(offset),
            msg: msg.into(),
        }
    }

    pub fn line(line: usize, msg: impl Into<String>) -> Self {
        Self {
            at: Location::Line(line),
            msg: msg.into(),
        }
    }

    pub fn in_file(self, path: &Path) -> AppError {
        AppError::Format {
            path: path.to_path_buf(),
            at: self.at,
            msg: self.msg,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {at}: {msg}", path.display())]
    Format {
        path: PathBuf,
        at: Location,
        msg: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] subtask_core::Error),
}

impl AppError {
    /// 1 usage, 2 data or format, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use subtask_core::Error as E;
        match self {
            AppError::Usage(_) => 1,
            AppError::Format { .. } | AppError::Io { .. } => 2,
            AppError::Core(e) => match e {
                E::Usage(_) | E::Config(_) | E::Parameter(_) => 1,
                E::Dimension(_) | E::Lookup { .. } | E::Rejected { .. } => 2,
                E::Numerical(_) => 3,
            },
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}
