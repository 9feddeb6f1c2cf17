use convex_ito_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const ABORT: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown function id '{id}'; registered functions:\n{listing}")]
    UnknownFunction { id: String, listing: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if is_abort(e) => exit::ABORT,
            _ => exit::CONFIG,
        }
    }
}

/// Oracle violations raised while sampling, as opposed to bad inputs.
pub fn is_abort(e: &CoreError) -> bool {
    matches!(e, CoreError::NegativeIntegrand { .. } | CoreError::NonFinite { .. })
}
