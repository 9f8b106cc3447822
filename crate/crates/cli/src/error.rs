//! CLI error taxonomy mapped to exit codes: 2 config, 3 estimation, 4 data.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("estimation failure: {0}")]
    Estimation(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Data(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Estimation(_) => "estimation",
            CliError::Data(_) => "data",
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct ErrorJson<'a> {
            error: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string_pretty(&ErrorJson {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("error serializes")
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json: {e}"))
    }
}

impl From<registrial::registry::RegistryError> for CliError {
    fn from(e: registrial::registry::RegistryError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<registrial::simlab::SimError> for CliError {
    fn from(e: registrial::simlab::SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<registrial::coxmod::FitError> for CliError {
    fn from(e: registrial::coxmod::FitError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<registrial::weighting::WeightError> for CliError {
    fn from(e: registrial::weighting::WeightError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<registrial::missing::ImputeError> for CliError {
    fn from(e: registrial::missing::ImputeError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<registrial::missing::BootstrapError> for CliError {
    fn from(e: registrial::missing::BootstrapError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<registrial::standardize::StandardizeError> for CliError {
    fn from(e: registrial::standardize::StandardizeError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<registrial::gestaft::GestError> for CliError {
    fn from(e: registrial::gestaft::GestError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<registrial::nonparam::NonparamError> for CliError {
    fn from(e: registrial::nonparam::NonparamError) -> Self {
        CliError::Estimation(e.to_string())
    }
}
