use serde::Serialize;

use semiclassical::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}: {1}")]
    Io(String, std::io::Error),

    #[error("{0}: {1}")]
    Csv(String, csv::Error),

    #[error("{0} verification check(s) failed")]
    VerifyFailed(usize),
}

/// Machine-readable record written to stderr on failure.
#[derive(Serialize)]
pub struct ErrorRecord<'a> {
    pub status: &'static str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
    pub config_hash: Option<&'a str>,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                Error::InvalidFrame(_) => "invalid_frame",
                Error::Conditioning(_) => "conditioning",
                Error::NonAnalytic { .. } => "non_analytic",
                Error::Unsupported(_) => "unsupported",
                Error::Parse { .. } => "parse",
                Error::OrderTooLow { .. } => "order_too_low",
                Error::OutOfRegime { .. } => "out_of_regime",
                Error::Overflow(_) => "overflow",
                Error::IntegrationFailure { .. } => "integration_failure",
                Error::Resource(_) => "resource",
                Error::GridInsufficient(_) => "grid_insufficient",
                Error::BoxBreach { .. } => "box_breach",
                Error::GridMismatch(_) => "grid_mismatch",
                Error::Schedule(_) => "schedule",
                Error::QuadratureBudget(_) => "quadrature_budget",
                Error::Config(_) => "config",
            },
            CliError::Config(_) => "config",
            CliError::Io(..) => "io",
            CliError::Csv(..) => "csv",
            CliError::VerifyFailed(_) => "verify_failed",
        }
    }

    /// 1 numerical failure, 2 configuration error, 3 resource error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                Error::InvalidFrame(_)
                | Error::NonAnalytic { .. }
                | Error::Unsupported(_)
                | Error::Parse { .. }
                | Error::OrderTooLow { .. }
                | Error::OutOfRegime { .. }
                | Error::GridMismatch(_)
                | Error::Schedule(_)
                | Error::Config(_) => 2,
                Error::Overflow(_) | Error::Resource(_) | Error::QuadratureBudget(_) => 3,
                Error::IntegrationFailure { .. }
                | Error::Conditioning(_)
                | Error::GridInsufficient(_)
                | Error::BoxBreach { .. } => 1,
            },
            CliError::Config(_) => 2,
            CliError::Io(..) | CliError::Csv(..) => 3,
            CliError::VerifyFailed(_) => 1,
        }
    }

    pub fn record<'a>(&self, config_hash: Option<&'a str>) -> ErrorRecord<'a> {
        ErrorRecord {
            status: "error",
            kind: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            config_hash,
        }
    }
}
