use thiserror::Error;

/// Errors produced anywhere in the planning and learning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid reference path: {0}")]
    InvalidPath(String),

    #[error("arc length {s:.6} m is outside the path [0, {total:.6}]")]
    OutOfPath { s: f64, total: f64 },

    #[error("Frenet singularity: |d * kappa| = {0:.6} >= 1")]
    FrenetSingularity(f64),

    #[error("point lies {0:.3} m from the road, beyond the projection margin")]
    TooFarFromPath(f64),

    #[error("lane index {index} out of range for a {lane_count}-lane road")]
    LaneOutOfRange { index: usize, lane_count: usize },

    #[error("invalid polynomial boundary problem: {0}")]
    InvalidBoundary(String),

    #[error("empty manifold grid")]
    EmptyGrid,

    #[error("time grid mismatch: trajectory dt {traj} s vs prediction dt {pred} s")]
    TimeGridMismatch { traj: f64, pred: f64 },

    #[error("no feasible trajectory among {0} candidates")]
    NoFeasibleTrajectory(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario infeasible: {0}")]
    Scenario(String),

    #[error("world is terminal ({0:?}); it cannot be stepped")]
    TerminalWorld(crate::sim::Status),

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: String, found: String },

    #[error("empty batch")]
    EmptyBatch,

    #[error("weight file checksum mismatch")]
    Checksum,

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("architecture mismatch at layer `{layer}`: expected {expected}, found {found}")]
    ArchitectureMismatch {
        layer: String,
        expected: String,
        found: String,
    },

    #[error("empty episode log")]
    EmptyLog,

    #[error("unknown case study {0}")]
    UnknownCase(u8),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn in_episode(self, episode: usize) -> Error {
        Error::Episode {
            episode,
            source: Box::new(self),
        }
    }
}
