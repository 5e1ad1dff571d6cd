use thiserror::Error;

use crate::imagegrid::CellClass;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid grid parameters: {0}")]
    InvalidGridParams(String),

    #[error("invalid threshold policy: {0}")]
    InvalidThresholdPolicy(String),

    #[error("invalid probability map: {0}")]
    InvalidProbability(String),

    /// Otsu thresholding was asked to split a map with a single value.
    #[error("input is constant, no threshold separates it")]
    ConstantInput,

    #[error("component graph is not a tree ({nodes} nodes, {edges} edges, {components} components)")]
    NotATree {
        nodes: usize,
        edges: usize,
        components: usize,
    },

    /// Two regions of the same side of the T/F partition share a 1-cell.
    /// Coordinates are refined-grid (row, col) of the first offending cell.
    #[error("bipartiteness violation: {a:?} touches {b:?} at refined cell ({row}, {col})")]
    BipartitenessViolation {
        a: CellClass,
        b: CellClass,
        row: usize,
        col: usize,
    },

    #[error("pixel ({row}, {col}) is {found:?} but its region is {expected:?}")]
    ClassMismatch {
        row: usize,
        col: usize,
        expected: CellClass,
        found: CellClass,
    },

    #[error("cannot aggregate an empty region")]
    EmptyRegion,

    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
