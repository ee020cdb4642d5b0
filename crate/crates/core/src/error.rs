use isac_gradtape::GradError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IsacError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sector unresolvable at this grid: [{lo_deg:.3}°, {hi_deg:.3}°] contains no grid angle")]
    SectorUnresolvable { lo_deg: f64, hi_deg: f64 },
    #[error("empty target: the desired beampattern is identically zero")]
    EmptyTarget,
    #[error("singular normal matrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("destructive combination: combined beam norm {norm:.3e} below 1e-12")]
    DestructiveCombination { norm: f64 },
    #[error("insufficient samples: {got} given, at least {needed} required")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("self-test failed: {0}")]
    SelfTest(String),
    #[error("malformed artifact: {0}")]
    Artifact(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IsacError {
    /// Failures of the numerics rather than of the inputs or environment.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            IsacError::Singular { .. }
                | IsacError::DestructiveCombination { .. }
                | IsacError::Diverged(_)
                | IsacError::SelfTest(_)
                | IsacError::Grad(GradError::Singular { .. } | GradError::Diverged { .. })
        )
    }
}

pub type Result<T, E = IsacError> = std::result::Result<T, E>;
