use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the predictor, evaluation and model-fitting routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("ranking is empty")]
    EmptyRanking,
    #[error("duplicate document id `{0}` in ranking")]
    DuplicateDoc(String),
    #[error("non-finite value for `{0}`")]
    NonFinite(String),
    #[error("no vector stored for document `{0}`")]
    MissingVector(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("vector store kind mismatch: {0}")]
    KindMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("degenerate value: {0}")]
    Degenerate(String),
    #[error("queries without a query type: {}", .0.join(", "))]
    MissingType(Vec<String>),
    #[error("query type `{0}` cannot be estimated (needs at least two queries)")]
    SingularType(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("unknown query type label `{0}`")]
    UnknownLabel(String),
    #[error("no feasible grid point: {0}")]
    EmptyGrid(String),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed or incomplete inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_) | Error::SingularDesign(_) | Error::SingularType(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
