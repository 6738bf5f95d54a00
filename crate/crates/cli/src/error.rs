use serde::Serialize;
use thiserror::Error;

/// Failure of a verb. The variant fixes the exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: schema, values, caps or arguments.
    #[error("{message}")]
    Validation { code: &'static str, message: String },
    /// The equivalence suite found a disagreement and wrote a certificate.
    #[error("{0}")]
    Certificate(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Validation {
            code,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Certificate(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Validation { code, .. } => code,
            CliError::Certificate(_) => "certificate",
            CliError::Internal(_) => "internal",
        }
    }

    /// The single JSON line written to standard error.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            code: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string(&Body {
            error: Inner {
                code: self.code(),
                message: self.to_string(),
                exit_code: self.exit_code(),
            },
        })
        .expect("error body serializes")
    }
}

impl From<condmeasure::error::Error> for CliError {
    fn from(e: condmeasure::error::Error) -> Self {
        use condmeasure::error::Error as E;
        let code = match &e {
            E::CapExceeded { .. } => "cap",
            E::NotRepresentable(_) => "not_representable",
            E::Terminated(_) => "terminated",
            _ => "invalid_model",
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::validation("schema", e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
