//! Error types shared across the engine.

use thiserror::Error;

use crate::data_model::{CategoryId, CustomerId, ProductId};

pub type Result<T> = std::result::Result<T, Error>;

/// Reason a single input line failed to parse.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected} comma-separated fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("invalid {field} id {value:?}")]
    InvalidId { field: &'static str, value: String },
    #[error("unknown behavior token {token:?}")]
    UnknownBehavior { token: String },
    #[error("invalid timestamp {value:?}")]
    InvalidTimestamp { value: String },
    #[error("negative timestamp {value}")]
    NegativeTimestamp { value: i64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {kind}")]
    Parse { line: u64, kind: ParseErrorKind },

    #[error("product {product} is mapped to both category {first} and category {second}")]
    CategoryConflict {
        product: ProductId,
        first: CategoryId,
        second: CategoryId,
    },

    #[error("unknown customer {0}")]
    UnknownCustomer(CustomerId),

    #[error("customer {0} has no recorded behaviors")]
    EmptyProfile(CustomerId),

    #[error("similarity is undefined when both behavior profiles are empty")]
    UndefinedSimilarity,

    #[error("profile of customer {0} touches no category known to the trained model")]
    ColdCategories(CustomerId),

    #[error("neighborhood of customer {0} is empty")]
    EmptyNeighborhood(CustomerId),

    #[error("customer {customer} has {found} records, need at least {need}")]
    TooFewRecords {
        customer: CustomerId,
        found: usize,
        need: usize,
    },

    #[error("recall is undefined for an empty relevant set")]
    EmptyRelevantSet,

    #[error("invalid cluster count {k}: {reason}")]
    InvalidClusterCount { k: usize, reason: String },

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// Coarse classification used by callers that map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad usage or configuration.
    Config,
    /// The inputs are unreadable, malformed, or mutually inconsistent.
    Data,
    /// A bug: an internal invariant did not hold.
    Internal,
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it escaped from.
    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::InvalidClusterCount { .. } => ErrorClass::Config,
            Error::Internal(_) => ErrorClass::Internal,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
