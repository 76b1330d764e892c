use std::path::Path;

use serde_json::json;

use veritrace_core::corpus::CorpusError;
use veritrace_core::decompose::DecomposeError;
use veritrace_core::infer::InferError;
use veritrace_core::report::ReportError;
use veritrace_core::trace::TraceError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error("reference solver disagrees with gold on {disagreements} of {total} instance(s)")]
    OracleDisagreement { disagreements: usize, total: usize },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Corpus(_) | CliError::Input(_) => 4,
            CliError::Decompose(_) | CliError::Trace(_) => 5,
            CliError::Infer(_) => 6,
            CliError::OracleDisagreement { .. } => 7,
            CliError::Report(_) => 8,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Corpus(_) => "corpus",
            CliError::Input(_) => "input",
            CliError::Decompose(_) => "decompose",
            CliError::Trace(_) => "trace",
            CliError::Infer(_) => "infer",
            CliError::OracleDisagreement { .. } => "oracle_disagreement",
            CliError::Report(_) => "report",
        }
    }

    /// One-line JSON object printed on stderr before exiting.
    pub fn summary(&self) -> String {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Infer(InferError::Unreachable { uncollected }) = self {
            v["uncollected"] = json!(uncollected);
        }
        v.to_string()
    }
}
