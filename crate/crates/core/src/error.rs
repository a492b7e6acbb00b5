use thiserror::Error;

use crate::care::CareError;

#[derive(Debug, Error)]
pub enum AebError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("speed {speed} m/s is below the low-speed guard; slip is undefined")]
    BelowLowSpeedGuard { speed: f64 },

    #[error("load transfer denominator is non-positive ({denominator}) for mu_f={mu_f}, mu_r={mu_r}")]
    ModelValidity {
        denominator: f64,
        mu_f: f64,
        mu_r: f64,
    },

    #[error("non-finite state derivative at t={t} s")]
    NonFinite { t: f64 },

    #[error("no stabilizing gain at scheduling point v_ref={v_ref} m/s: {source}")]
    Scheduling {
        v_ref: f64,
        #[source]
        source: CareError,
    },

    #[error(transparent)]
    Care(#[from] CareError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AebError {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        AebError::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = AebError> = std::result::Result<T, E>;
