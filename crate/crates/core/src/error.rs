use thiserror::Error;

use crate::geometry::Region;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("singular configuration: {0}")]
    Singularity(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("no controller is defined for a live UAV in region {0:?}; it should have been marked arrived")]
    ContractViolation(Region),

    #[error("detection radius too small: r_d = {r_d} must exceed r_s + r_a + 2 r_v = {bound}")]
    DetectionRadius { r_d: f64, bound: f64 },

    #[error("non-finite state at t = {t}: {dump}")]
    NonFinite { t: f64, dump: String },

    #[error("scenario error at `{path}`: {reason}")]
    Scenario { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_owned(),
            reason: reason.into(),
        }
    }

    pub(crate) fn scenario(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
