use core::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by model evaluation, integration and the bound checkers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A model or configuration parameter is out of range.
    Parameter {
        /// Name of the offending field.
        field: &'static str,
        /// What is wrong with it.
        reason: &'static str,
    },
    /// A scalar argument lies at or beyond the weight's singular point.
    Domain {
        /// The argument that was rejected.
        s: f64,
        /// The open lower bound of the domain.
        floor: f64,
    },
    /// A pair of agents sits at or inside the weight's singular point.
    Singularity {
        /// First agent.
        i: usize,
        /// Second agent.
        j: usize,
        /// Their distance.
        distance: f64,
    },
    /// The proximity guard kept rejecting steps until the step size fell
    /// below `dt_min`.
    SingularityStall {
        /// Time of the last accepted state.
        time: f64,
        /// Step size that would have been tried next.
        dt: f64,
    },
    /// Array shapes disagree with `n_agents × dim`.
    Shape {
        /// Expected length.
        expected: usize,
        /// Length found.
        found: usize,
    },
    /// A state contains NaN or infinite entries.
    NonFinite,
    /// A closed form is not available for this weight/coupling.
    Unsupported(&'static str),
    /// The flocking-condition integral is undefined (σ_x(0) = 0 with a
    /// singular weight).
    IntegralUndefined,
    /// Too few samples for a fit or a finite-difference check.
    InsufficientData {
        /// Samples required.
        needed: usize,
        /// Samples available.
        got: usize,
    },
    /// The collision group has ‖x‖_C = 0.
    DegenerateGroup,
    /// A pair outside the collision group came closer than the separation
    /// the dissipation estimate assumes.
    HypothesisViolated {
        /// Group member.
        i: usize,
        /// Non-member.
        j: usize,
        /// Sample time.
        time: f64,
        /// Their distance.
        distance: f64,
    },
    /// A structural condition of an estimate does not hold (e.g. the
    /// primitive growth condition of the Ψ-based β-distance bound).
    ConditionFailed {
        /// Which condition.
        condition: &'static str,
        /// Largest violation found.
        max_violation: f64,
    },
    /// The trajectory record does not have the status a checker requires.
    IncompleteRecord,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter { field, reason } => write!(f, "invalid parameter `{field}`: {reason}"),
            Error::Domain { s, floor } => {
                write!(f, "argument {s} outside weight domain (must exceed {floor})")
            }
            Error::Singularity { i, j, distance } => {
                write!(f, "agents {i} and {j} at singular distance {distance}")
            }
            Error::SingularityStall { time, dt } => write!(
                f,
                "proximity guard stalled at t = {time} (next step {dt} below dt_min)"
            ),
            Error::Shape { expected, found } => {
                write!(f, "array length {found} does not match expected {expected}")
            }
            Error::NonFinite => write!(f, "state contains non-finite entries"),
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
            Error::IntegralUndefined => {
                write!(f, "flocking integral undefined: initial position spread is zero")
            }
            Error::InsufficientData { needed, got } => {
                write!(f, "insufficient data: need {needed} samples, got {got}")
            }
            Error::DegenerateGroup => write!(f, "collision group has zero position fluctuation"),
            Error::HypothesisViolated { i, j, time, distance } => write!(
                f,
                "separation hypothesis violated by pair ({i}, {j}) at t = {time}: distance {distance}"
            ),
            Error::ConditionFailed { condition, max_violation } => {
                write!(f, "condition {condition} fails (max violation {max_violation})")
            }
            Error::IncompleteRecord => write!(f, "trajectory record did not complete"),
        }
    }
}

impl core::error::Error for Error {}
