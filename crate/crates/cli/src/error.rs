use appgrowth_core::Error as CoreError;

/// CLI failure carrying its exit code: 1 computation, 2 I/O, 3 config.
#[derive(Debug)]
pub enum CliError {
    Compute(String),
    Io(String),
    Config(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Compute(_) => 1,
            CliError::Io(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Compute(m) | CliError::Io(m) | CliError::Config(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::Io { .. }
            | CoreError::HeaderMismatch { .. }
            | CoreError::Cell { .. }
            | CoreError::Invariant(_) => CliError::Io(e.to_string()),
            CoreError::Param(_) => CliError::Config(e.to_string()),
            CoreError::Dimension(_) | CoreError::Degenerate(_) | CoreError::NonFinite(_) => {
                CliError::Compute(e.to_string())
            }
        }
    }
}
