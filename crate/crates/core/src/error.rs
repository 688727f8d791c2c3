use std::path::PathBuf;

use thiserror::Error;

use crate::model::VehicleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate vehicle id {0}")]
    DuplicateId(VehicleId),

    #[error("vehicles {first} and {second} overlap at x = {x} m on the {lane} lane")]
    OverlappingVehicles {
        first: VehicleId,
        second: VehicleId,
        lane: &'static str,
        x: f64,
    },

    /// A configuration value broke one of its invariants. `field` names the
    /// offending key as it appears in scenario files.
    #[error("invalid `{field}`: {constraint}")]
    InvalidConfig { field: String, constraint: String },

    #[error("scenario generation failed: {0}")]
    InfeasibleTemplate(String),

    #[error(
        "spacing violation on the {lane} lane at t = {t:.1} s: vehicle {follower} is {spacing:.3} m behind {leader} (minimum {minimum:.3} m)"
    )]
    SpacingViolation {
        t: f64,
        lane: &'static str,
        leader: VehicleId,
        follower: VehicleId,
        spacing: f64,
        minimum: f64,
    },

    #[error("malformed scenario file {path}: {message}")]
    ScenarioFile { path: PathBuf, message: String },

    #[error("malformed trajectory table: {0}")]
    TrajectoryTable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
