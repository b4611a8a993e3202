use std::fmt;
use std::process::ExitCode;

use atompack::accounting::AccountingError;
use atompack::analyzer::AnalyzerError;
use atompack::corpus::CorpusError;
use atompack::diagnostics::DiagnosticsError;
use atompack::packer::format::FormatError;
use atompack::packer::{ConfigError, PackError};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Usage = 2,
    Validation = 3,
    Io = 4,
    Data = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(code: Code, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        Self::new(Code::Validation, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self::new(Code::Data, anyhow::anyhow!("{msg}"))
    }

    pub fn io(msg: impl fmt::Display) -> Self {
        Self::new(Code::Io, anyhow::anyhow!("{msg}"))
    }

    /// Prefixes the message, keeping the exit code.
    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            code: self.code,
            error: self.error.context(ctx),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code as u8)
    }
}

impl fmt::Display for CliError {
    /// The error chain joined by ": ", skipping causes a message already quotes.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut text = String::new();
        for cause in self.error.chain() {
            let msg = cause.to_string();
            if text.contains(&msg) {
                continue;
            }
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
        f.write_str(&text)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::new(Code::Validation, e)
    }
}

impl From<PackError> for CliError {
    fn from(e: PackError) -> Self {
        let code = match e {
            PackError::Config(_) => Code::Validation,
            _ => Code::Data,
        };
        Self::new(code, e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::Io { .. } => Code::Io,
            _ => Code::Data,
        };
        Self::new(code, e)
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        if let FormatError::AlreadyExists(path) = &e {
            return Self::io(format!("{path} already exists (pass --overwrite to replace it)"));
        }
        let code = match e {
            FormatError::Io { .. } | FormatError::AlreadyExists(_) => Code::Io,
            _ => Code::Data,
        };
        Self::new(code, e)
    }
}

impl From<AnalyzerError> for CliError {
    fn from(e: AnalyzerError) -> Self {
        let code = match e {
            AnalyzerError::Io { .. } => Code::Io,
            AnalyzerError::InvalidEma { .. }
            | AnalyzerError::TooFewRuns(_)
            | AnalyzerError::ZeroSegments
            | AnalyzerError::MissingManifest(_) => Code::Validation,
            _ => Code::Data,
        };
        Self::new(code, e)
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        let code = match e {
            DiagnosticsError::InvalidOrder | DiagnosticsError::InvalidSmoothing => Code::Validation,
            _ => Code::Data,
        };
        Self::new(code, e)
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        Self::new(Code::Data, e)
    }
}
