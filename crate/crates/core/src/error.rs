use thiserror::Error;

use crate::grid::Grid;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: Grid, found: Grid },

    #[error("value space mismatch: expected |Y| = {expected}, found {found}")]
    ValueSpaceMismatch { expected: usize, found: usize },

    #[error("expected {expected} source images, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("value {value} out of range for |Y| = {size}")]
    ValueOutOfRange { value: usize, size: usize },

    #[error("label {label} out of range for N = {num_labels}")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("invalid weighting function: {0}")]
    InvalidWindow(String),

    #[error("window radius {radius} does not fit in a {grid} image")]
    WindowTooLarge { radius: usize, grid: Grid },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("enumeration of {required} entries exceeds the cap of {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("invalid quantization: {0}")]
    InvalidQuantization(String),

    #[error("class {class} has {available} eligible points, {requested} requested")]
    InsufficientPoints {
        class: usize,
        requested: usize,
        available: usize,
    },

    #[error("class {class}: {components} components requested but at most {max} available")]
    TooManyComponents {
        class: usize,
        components: usize,
        max: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
