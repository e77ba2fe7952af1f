use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario document is malformed: {0}")]
    Parse(String),
    #[error("unsupported scenario schema version {0} (expected 1)")]
    Schema(u32),
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("could not place agent {placed} of {requested} without overlap after {attempts} attempts")]
    NoRoom {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("explicit placement lists {given} positions but {requested} agents were requested")]
    ExplicitCount { given: usize, requested: usize },
    #[error("explicit position {index} at ({x}, {y}) overlaps another agent or a wall")]
    ExplicitOverlap { index: usize, x: f64, y: f64 },
}

/// Raised when a non-finite value shows up in simulation state.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("non-finite {what} at tick {tick} for agent {agent:?}")]
pub struct NumericError {
    pub tick: u64,
    pub agent: Option<usize>,
    pub what: &'static str,
}

#[derive(Debug, Error)]
#[error("agent lies on its exit segment; keep the previous direction {previous:?}")]
pub struct DegenerateError {
    pub previous: Vec2,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient exposure history: need {needed} ticks ending at tick {tick}")]
    InsufficientHistory { needed: usize, tick: u64 },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input length {got} does not match model input size {expected}")]
    Shape { expected: usize, got: usize },
    #[error("dataset contains a single class ({positives} positive of {total})")]
    DegenerateDataset { positives: usize, total: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("run was executed in {0} mode; full-force mode is required")]
    Mode(String),
    #[error("model file is malformed at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("protocol error: {0}")]
pub struct ProtocolError(pub String);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("run config is malformed: {0}")]
    Parse(String),
    #[error("invalid run config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run is incomplete: {0}")]
    IncompleteRun(String),
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive is incomplete: missing {0}")]
    Incomplete(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

/// Top-level error for driving a run.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}
