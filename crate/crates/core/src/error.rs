use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::optim::OptResult;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} not found")]
    NotFound(String),

    #[error("schema violation in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("run `{run_id}`: {message}")]
    Domain { run_id: String, message: String },

    /// The design matrix loses rank at `column`; `null_direction` spans the
    /// offending null space.
    #[error("rank-deficient design at column {column} (null direction {null_direction:?})")]
    RankDeficient {
        column: usize,
        null_direction: Vec<f64>,
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("line search failed on a non-finite objective (best objective {})", best.objective)]
    LineSearch { best: Box<OptResult> },

    #[error("every basin-hopping local search failed")]
    AllHopsFailed,

    #[error("query shape `{query}` does not match form `{form}`")]
    ShapeMismatch { form: String, query: String },

    #[error("proxy `{0}` missing from records")]
    MissingProxy(String),
}
