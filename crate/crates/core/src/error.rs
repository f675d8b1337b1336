use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "stability violated: lambda*n = {load} must be below 1 - epsilon = {capacity} \
         (lambda = {lambda}, n = {n}, epsilon = {epsilon})"
    )]
    Unstable {
        lambda: f64,
        n: u32,
        epsilon: f64,
        load: f64,
        capacity: f64,
    },

    #[error("numeric instability: {0}; retry with extended precision")]
    NumericInstability(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("divergent mean: {0}")]
    DivergentMean(String),

    #[error("saddlepoint threshold {threshold} does not exceed the mean {mean}")]
    BelowMean { threshold: u64, mean: f64 },

    #[error("root finding did not converge: {0}")]
    Convergence(String),

    #[error("network-calculus bound is infeasible: {0}")]
    InfeasibleBound(String),

    #[error("target {target:e} is infeasible: violation probability is {floor:e} as lambda -> 0")]
    InfeasibleTarget { target: f64, floor: f64 },

    #[error("monotonicity assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
