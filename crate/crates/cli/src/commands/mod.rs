pub mod ablate;
pub mod eval;
pub mod infer;
pub mod label;
pub mod plot;
pub mod simulate;
pub mod train;

use raddet_core::CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or inconsistent flags (exit 1).
    Usage(String),
    /// Data or processing failure (exit 2).
    Data(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            // Invalid user-provided values are usage errors.
            CoreError::Config(_) | CoreError::Geometry(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

pub type CliResult = Result<(), CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Comma-separated triple, e.g. `--counts 1,1,1`.
pub fn parse_counts(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated counts".into());
    }
    let mut out = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse()
            .map_err(|_| format!("bad count '{p}'"))?;
    }
    Ok(out)
}
