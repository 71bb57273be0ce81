use std::path::PathBuf;

use serde_json::json;
use splineband::{BandError, SimulationError};
use thiserror::Error;

use crate::cv::CvError;
use crate::data::DataError;
use crate::pipeline::PipelineError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PIPELINE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Pipeline(#[from] PipelineError),

    #[error(transparent)]
    Band(#[from] BandError),

    #[error(transparent)]
    Simulation(#[from] SimulationError),

    #[error(transparent)]
    Cv(#[from] CvError),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(String),

    #[error("cannot start thread pool: {0}")]
    Threads(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_PIPELINE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Pipeline(_) => "model",
            CliError::Band(BandError::OutsideSupport { .. }) => "out_of_support",
            CliError::Band(_) => "band",
            CliError::Simulation(_) => "simulation",
            CliError::Cv(_) => "cross_validation",
            CliError::Io { .. } => "io",
            CliError::Serialize(_) => "serialize",
            CliError::Threads(_) => "threads",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}
