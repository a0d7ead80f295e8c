use inertia_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}{}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse { origin: String, line: Option<usize>, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: CoreError },
    #[error("reduce: reduced step response deviates {peak:.1}% from the full model (limit {limit:.0}%)")]
    Fidelity { peak: f64, limit: f64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("comparison: {0}")]
    Comparison(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(CoreError) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    /// 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Stage { source, .. } if is_numerical(source) => 2,
            CliError::Fidelity { .. } => 2,
            _ => 1,
        }
    }
}

fn is_numerical(e: &CoreError) -> bool {
    use CoreError::*;
    match e {
        InvalidParameter { .. } | DimensionMismatch { .. } | IndexOutOfRange { .. } | MissingVariable(_) | BaseMismatch
        | InvalidScenario(_) => false,
        NonFinite { .. } | Domain { .. } | Singular { .. } | NoConvergence { .. } | IllConditioned { .. }
        | ComplexMode { .. } | NonFiniteJacobian { .. } | Infeasible { .. } | Diverged { .. } => true,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. } | CoreError::InvalidScenario(_) => CliError::Invalid(e.to_string()),
            other => CliError::Stage { stage: "model", source: other },
        }
    }
}
