use thiserror::Error;

pub type Result<T, E = PolysetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PolysetError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit failed: {0}")]
    Fit(String),

    /// The operation is not implemented for this distribution family.
    #[error("unsupported: {0}")]
    Capability(String),

    #[error("unknown monomer `{0}` (not in encoder vocabulary)")]
    Vocabulary(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("unsupported schema `{schema}` version {version}")]
    Version { schema: String, version: u64 },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> PolysetError {
    PolysetError::Domain(msg.into())
}
