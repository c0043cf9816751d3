use absorb_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum QdError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{stage}: {source}")]
    Module { stage: &'static str, source: Error },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl QdError {
    pub fn module(stage: &'static str) -> impl FnOnce(Error) -> QdError {
        move |source| QdError::Module { stage, source }
    }

    /// 2 for a broken physics invariant, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            QdError::Module { source, .. } if is_invariant_failure(source) => 2,
            _ => 1,
        }
    }
}

/// Errors that mean the physics checks failed rather than the input.
pub fn is_invariant_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::ContractionViolated { .. }
            | Error::NegativeIntegrand { .. }
            | Error::Admissibility { .. }
            | Error::DomainCollapsed { .. }
            | Error::NodeEncountered { .. }
    )
}
