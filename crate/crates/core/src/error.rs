use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("vector is not of unit length (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("constraint is degenerate: |w'f| = {wf} is below 1e-12")]
    DegenerateConstraint { wf: f64 },

    #[error("reduced normal matrix S'X'V0^-1 X S is singular: {0}")]
    SingularReducedSystem(String),

    #[error("augmented normal matrix X'V0^-1 X + c ww' is singular: {0}")]
    SingularAugmentedSystem(String),

    #[error("full covariance V0 + XAX' is singular")]
    SingularFullCovariance,

    #[error("bordered KKT system is singular")]
    SingularKkt,

    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),

    #[error("unknown artefact `{0}`")]
    UnknownArtefact(String),

    #[error("record {record} has no value for covariate `{name}`")]
    MissingCovariate { record: usize, name: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation failed with {} violation(s): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    /// True for the rank/definiteness failures a solver can raise.
    pub fn is_singular(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularReducedSystem(_)
                | Error::SingularAugmentedSystem(_)
                | Error::SingularFullCovariance
                | Error::SingularKkt
                | Error::DegenerateConstraint { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Io => Error::Io(e.into()),
            Category::Syntax | Category::Eof => Error::Parse(e.to_string()),
            Category::Data => Error::Schema(e.to_string()),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}
