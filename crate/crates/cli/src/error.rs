use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ESTIMATOR: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] concentra_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use concentra_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(E::InvalidInput(_) | E::DimensionMismatch { .. } | E::Config(_) | E::OutOfRegime(_)) => {
                EXIT_CONFIG
            }
            CliError::Core(_) | CliError::Io(_) => EXIT_ESTIMATOR,
        }
    }

    fn kind(&self) -> &'static str {
        use concentra_core::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. } => "dimension_mismatch",
                E::InvalidInput(_) => "invalid_input",
                E::UndefinedGradient => "undefined_gradient",
                E::Degenerate(_) => "degenerate",
                E::Config(_) => "config",
                E::Convergence { .. } => "convergence",
                E::OutOfRegime(_) => "out_of_regime",
                E::Estimator(_) => "estimator",
                E::NoHits { .. } => "no_hits",
            },
        }
    }

    /// Machine-readable diagnostics.
    pub fn diagnostics(&self) -> serde_json::Value {
        let mut v = json!({
            "status": "error",
            "exit_code": self.exit_code(),
            "kind": self.kind(),
            "message": self.to_string(),
        });
        match self {
            CliError::Core(concentra_core::Error::Convergence { iterations, residual }) => {
                v["iterations"] = json!(iterations);
                v["residual"] = json!(residual);
            }
            CliError::Core(concentra_core::Error::NoHits { samples, log_upper }) => {
                v["samples"] = json!(samples);
                v["log_p_upper"] = json!(log_upper);
            }
            _ => {}
        }
        v
    }
}
