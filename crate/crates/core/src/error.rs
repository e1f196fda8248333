use std::path::PathBuf;

use thiserror::Error;

/// Velocity evaluation hit a point where `|ψ|²` is below the density floor.
///
/// This is the recoverable signal the integrator reacts to by shrinking its
/// step; it is kept separate from [`Error`] so the hot path stays `Copy`.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("density {density:e} below floor at ({}, {})", x[0], x[1])]
pub struct NodeSingularity {
    pub x: [f64; 2],
    pub density: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({0}, {1}) lies outside the box [0, π]²")]
    OutOfBox(f64, f64),

    #[error("mode quantum numbers must be positive, got (m, n) = ({m}, {n})")]
    InvalidMode { m: u32, n: u32 },

    #[error("mode amplitude must be finite and non-negative, got {0}")]
    InvalidAmplitude(f64),

    #[error("wave state has no modes")]
    EmptyState,

    #[error("wave state is not normalized: sum of squared amplitudes is {0}")]
    NotNormalized(f64),

    #[error(transparent)]
    Node(#[from] NodeSingularity),

    #[error("invalid integrator configuration: {0}")]
    Integrator(String),

    #[error("trajectory leg failed with status {0:?}")]
    TrajectoryFailed(crate::integrate::TrajectoryStatus),

    #[error("coarse fields have different geometry or valid-cell sets")]
    MismatchedCells,

    #[error("equilibrium coarse density is not positive in cell ({0}, {1})")]
    NonPositiveEquilibrium(usize, usize),

    #[error("invalid lattice geometry: {0}")]
    Geometry(String),

    #[error("invalid loop: {0}")]
    Loop(String),

    #[error("invalid run configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
