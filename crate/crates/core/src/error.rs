use thiserror::Error;

/// Errors raised by the measure, statistics and cascade layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty set has no Hausdorff distance")]
    EmptySet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("plane frame is rank deficient")]
    RankDeficient,

    #[error("planes have different intrinsic dimension ({0} vs {1})")]
    PlaneDimension(usize, usize),

    #[error("center not in support at this scale (r = {radius})")]
    NotInSupport { radius: f64 },

    #[error("empty ball: no support points within radius {radius}")]
    EmptyBall { radius: f64 },

    #[error("resolution exhausted: {count} samples in ball of radius {radius} (need {required})")]
    ResolutionExhausted {
        radius: f64,
        count: usize,
        required: usize,
    },

    #[error("resolution exhausted at cascade level {level}: {count} samples in ball of radius {radius} (need {required})")]
    LevelResolution {
        level: usize,
        radius: f64,
        count: usize,
        required: usize,
    },

    #[error("point outside validity region: |x - x1| = {distance} exceeds {limit}")]
    OutsideValidity { distance: f64, limit: f64 },

    #[error("insufficient dynamic range: {usable} usable scales (need {required})")]
    InsufficientRange { usable: usize, required: usize },

    #[error("κ must be below 1/16 (got κ = {0})")]
    KappaTooLarge(f64),

    #[error("α too small for this κ: 4κ²(1−κ) = {bound} ≥ α = {alpha}")]
    AlphaTooSmall { bound: f64, alpha: f64 },

    #[error("schedule ledger has failing inequalities: {0}")]
    LedgerFailed(String),

    #[error("empty feasible κ region for α = {0}")]
    EmptyFeasibleRegion(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid cloud data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
