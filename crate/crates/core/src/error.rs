use thiserror::Error;

/// Identifies one observation of the panel: subject index, time label and,
/// for per-series quantities, the response index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ObsId {
    pub subject: usize,
    pub time: i64,
    pub series: Option<usize>,
}

impl std::fmt::Display for ObsId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.series {
            Some(j) => write!(f, "subject {}, time {}, series {}", self.subject, self.time, j),
            None => write!(f, "subject {}, time {}", self.subject, self.time),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{family}: parameter {value} outside domain ({bound})")]
    Domain {
        family: String,
        value: f64,
        bound: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("zero-probability observation at {0}")]
    ZeroProbability(ObsId),

    #[error("conditioning on a null event: previous category {category} has probability 0")]
    NullConditioning { category: u32 },

    #[error("optimizer failed in {stage}: {message}")]
    Optimizer { stage: String, message: String },

    #[error("negative Hessian is not positive definite; eigenvalues {eigenvalues:?}")]
    HessianNotPd { eigenvalues: Vec<f64> },

    #[error("degenerate variance: the per-subject log-likelihood differences are constant")]
    DegenerateVariance,

    #[error("{what} count {count} exceeds cap {cap}")]
    CapExceeded {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(family: impl Into<String>, value: f64, bound: impl Into<String>) -> Self {
        Error::Domain {
            family: family.into(),
            value,
            bound: bound.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Invalid(_)
                | Error::Schema { .. }
                | Error::CapExceeded { .. }
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Invalid(_) => "invalid",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::ZeroProbability(_) => "zero_probability",
            Error::NullConditioning { .. } => "null_conditioning",
            Error::Optimizer { .. } => "optimizer",
            Error::HessianNotPd { .. } => "hessian_not_pd",
            Error::DegenerateVariance => "degenerate_variance",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
