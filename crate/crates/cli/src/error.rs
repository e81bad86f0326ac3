use spinrelax_core::Error as CoreError;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(format!("configuration error: {}", msg.into()))
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(format!("data error: {}", msg.into()))
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(format!("numeric error: {}", msg.into()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Config(_)
            | CoreError::Domain(_)
            | CoreError::Capacity { .. }
            | CoreError::UnsupportedKind(_) => CliError::Config(msg),
            CoreError::Data(_) | CoreError::Csv(_) | CoreError::Json(_) | CoreError::Io(_) => {
                CliError::Data(msg)
            }
            CoreError::Numeric(_) | CoreError::Regime(_) | CoreError::Range { .. } => {
                CliError::Numeric(msg)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::from(CoreError::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(CoreError::Data("x".into())).exit_code(), 3);
        assert_eq!(
            CliError::from(CoreError::Numeric("x".into())).exit_code(),
            4
        );
        assert_eq!(CliError::from(CoreError::Regime("x".into())).exit_code(), 4);
    }
}
