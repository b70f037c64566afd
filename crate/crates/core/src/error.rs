use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1 and the product must be addressable")]
    InvalidShape(Vec<usize>),

    #[error("data length {got} does not match shape volume {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite coefficient at flat index {0}")]
    NonFinite(usize),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid pairing plan: {0}")]
    InvalidPlan(String),

    #[error("tensor order {order} is below the required minimum {min}")]
    OrderTooLow { order: usize, min: usize },

    #[error("stop order must be 2 or 3, got {0}")]
    InvalidStopOrder(usize),

    #[error("state has zero norm")]
    ZeroState,

    #[error("malformed concentration tree: {0}")]
    MalformedTree(String),

    #[error("states are not related by the given local operators (relative residual {residual:.3e})")]
    NotRelated { residual: f64 },

    #[error("matrix is singular or numerically not invertible: {0}")]
    Singular(String),

    #[error("operator {index} is not unitary (defect {defect:.3e})")]
    NotUnitary { index: usize, defect: f64 },

    #[error("realignment is not rank one (sigma2/sigma1 = {ratio:.3e})")]
    NotRankOne { ratio: f64 },

    #[error("local rank mismatch at level {level}, mode {mode}: {left} vs {right}")]
    RankMismatch {
        level: usize,
        mode: usize,
        left: usize,
        right: usize,
    },

    #[error("integer overflow while counting parameters")]
    Overflow,

    #[error("invalid state specification: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
