use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} of an empty tensor")]
    Empty(&'static str),
    #[error("singular linear system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("diverged: non-finite gradient in parameter {param} at step {step}")]
    Diverged { param: usize, step: u64 },
}

pub type Result<T, E = GradError> = std::result::Result<T, E>;
