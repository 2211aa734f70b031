use std::fmt;

use thiserror::Error;

/// Experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn indicator(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Control => f.write_str("control"),
            Arm::Treated => f.write_str("treated"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("row {row}: treatment indicator must be 0 or 1, got {value}")]
    InvalidTreatmentIndicator { row: usize, value: i64 },
    #[error("{0} arm has no units")]
    EmptyArm(Arm),
    #[error("row {row}, column `{column}`: value is not finite")]
    NonFiniteValue { row: usize, column: String },
    #[error("row {row}: {message}")]
    MalformedInput { row: usize, message: String },
    #[error("ratio estimand with a control mean of {denominator:e}")]
    DivisionByZero { denominator: f64 },
    #[error("design matrix is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("regression needs at least {needed} units, got {got}")]
    SubsetTooSmall { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unit index {index} out of range for {n} units")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("{arm} arm model: {source}")]
    ArmModel { arm: Arm, source: Box<Error> },
    #[error("cannot estimate a density: all values are identical")]
    DegenerateSample,
    #[error("number of strata must be at least 1, got {0}")]
    InvalidStrataCount(usize),
    #[error("too few distinct values for {strata} strata")]
    TooFewDistinctValues { strata: usize },
    #[error("{count} distinct values exceeds the class limit of {limit}")]
    TooManyClasses { count: usize, limit: usize },
    #[error("stratum {stratum} has no {arm} units")]
    EmptyCell { stratum: usize, arm: Arm },
    #[error("{arm} arm has {size} units, fewer than {buckets} buckets")]
    ArmSmallerThanB {
        arm: Arm,
        size: usize,
        buckets: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("illegal scenario: {0}")]
    IllegalScenario(String),
    #[error("replication {rep} (seed {seed}): {source}")]
    Replication {
        rep: usize,
        seed: u64,
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidTreatmentIndicator { .. } => "invalid_treatment_indicator",
            Error::EmptyArm(_) => "empty_arm",
            Error::NonFiniteValue { .. } => "non_finite_value",
            Error::MalformedInput { .. } => "malformed_input",
            Error::DivisionByZero { .. } => "division_by_zero",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::SubsetTooSmall { .. } => "subset_too_small",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::ArmModel { source, .. } => source.code(),
            Error::DegenerateSample => "degenerate_sample",
            Error::InvalidStrataCount(_) => "invalid_strata_count",
            Error::TooFewDistinctValues { .. } => "too_few_distinct_values",
            Error::TooManyClasses { .. } => "too_many_classes",
            Error::EmptyCell { .. } => "empty_cell",
            Error::ArmSmallerThanB { .. } => "arm_smaller_than_b",
            Error::InvalidConfig(_) => "invalid_config",
            Error::IllegalScenario(_) => "illegal_scenario",
            Error::Replication { source, .. } => source.code(),
        }
    }

    /// True for errors caused by the input data itself rather than by estimation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch(_)
                | Error::InvalidTreatmentIndicator { .. }
                | Error::EmptyArm(_)
                | Error::NonFiniteValue { .. }
                | Error::MalformedInput { .. }
        )
    }
}
