use thiserror::Error;

/// Errors raised by the model, pricing, optimisation and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The attacker's share of hash power must lie strictly inside (0, 0.5).
    #[error("attacker power alpha = {0} violates the threat model (requires 0 < alpha < 0.5)")]
    ThreatModel(f64),

    #[error("{name} = {value} must be non-negative")]
    NegativePower { name: &'static str, value: f64 },

    /// alpha + beta + eta exceeds the total (normalised) hash power.
    #[error("power over-allocated: alpha + beta + eta = {0} > 1")]
    OverAllocated(f64),

    #[error("{name} = {value} is outside [0, 1]")]
    FractionOutOfRange { name: &'static str, value: f64 },

    #[error("relative extra reward is undefined for baseline reward {0}")]
    UndefinedRer(f64),

    /// Bribe pricing needs some infiltration (r̄·alpha > 0).
    #[error("no infiltration (effective r̄ = {0}); bribe pricing is undefined")]
    NoInfiltration(f64),

    #[error("bribe region is empty (floor {floor} >= ceiling {ceiling})")]
    InfeasibleBribe { floor: f64, ceiling: f64 },

    #[error("boundary line {level} does not intersect the unit square")]
    NoBoundaryPoint { level: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidSimulation(String),

    #[error("invalid game config: {0}")]
    InvalidGame(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
