//! Crate-wide error type.

use std::path::PathBuf;

use crate::bridge::Diagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("coverage error: no sample within {window} s for {} (profile, time) pair(s): {}", .gaps.len(), format_gaps(.gaps))]
    Coverage { window: f64, gaps: Vec<CoverageGap> },

    #[error("dimension {dim} has zero pooled standard deviation")]
    DegenerateDimension { dim: usize },

    #[error("kernel underflow in transition {transition}: a row or column of exp(-C/eps) is entirely below 1e-300; increase eps or enable cost scaling")]
    KernelUnderflow { transition: usize },

    #[error("solver did not reach tolerance {tolerance:e} after {iterations} sweeps (max marginal L1 error {error:e})")]
    NotConverged {
        iterations: usize,
        tolerance: f64,
        error: f64,
        diagnostics: Box<Diagnostics>,
    },

    #[error("numerical failure in sweep {sweep}: non-finite or non-positive scaling at snapshot {sigma}")]
    NumericalFailure { sweep: usize, sigma: usize },

    #[error("dense tensor of {entries} entries exceeds the oracle limit of {limit}")]
    OracleTooLarge { entries: f64, limit: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("query time {tau} outside the solved range [{start}, {end}]")]
    OutOfRange { tau: f64, start: f64, end: f64 },

    #[error("state error: {0}")]
    State(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

/// A (profile, snapshot time) pair with no sample inside the extraction window.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGap {
    pub profile_id: String,
    pub tau: f64,
    /// Distance to the nearest sample, in seconds.
    pub distance: f64,
}

fn format_gaps(gaps: &[CoverageGap]) -> String {
    const SHOWN: usize = 8;
    let mut parts: Vec<String> = gaps
        .iter()
        .take(SHOWN)
        .map(|g| format!("({}, t={}, nearest {:.4} s)", g.profile_id, g.tau, g.distance))
        .collect();
    if gaps.len() > SHOWN {
        parts.push(format!("... {} more", gaps.len() - SHOWN));
    }
    parts.join(", ")
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 for usage and validation problems, 1 for
    /// runtime and numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Validation(_)
            | Error::InsufficientData(_)
            | Error::Coverage { .. }
            | Error::DegenerateDimension { .. }
            | Error::Domain(_)
            | Error::Argument(_)
            | Error::OutOfRange { .. }
            | Error::OracleTooLarge { .. }
            | Error::State(_)
            | Error::Config(_)
            | Error::Json { .. } => 2,
            Error::KernelUnderflow { .. }
            | Error::NotConverged { .. }
            | Error::NumericalFailure { .. }
            | Error::Generation(_)
            | Error::Numerical(_)
            | Error::Io { .. } => 1,
        }
    }
}
