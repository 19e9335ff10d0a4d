use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector handed to a network layer had the wrong length.
    Dimension {
        what: &'static str,
        layer: usize,
        expected: usize,
        got: usize,
    },
    /// Network parameters violate a structural invariant.
    Shape(String),
    /// A gradient contained NaN or an infinity.
    NonFiniteGradient { layer: usize },
    /// Probabilities are negative or do not sum to one.
    InvalidDistribution,
    /// Action index outside the environment's action set.
    InvalidAction(usize),
    /// A scalar argument is outside its domain.
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    /// `latest_trigger` was asked about an agent that has not sent yet.
    NoTriggerYet,
    /// Sender memory read before the first trigger of the episode.
    InvalidMemory { agent: usize },
    /// Networks were built for a different task or agent count.
    TaskMismatch(String),
    /// Training stopped making progress (evaluation stuck at the step cap).
    Diverged { step: u64, consecutive: u32 },
    /// Records used in an update were produced by stale parameters.
    StaleRollout { expected: u64, got: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                layer,
                expected,
                got,
            } => write!(
                f,
                "{what} dimension mismatch at layer {layer}: expected {expected}, got {got}"
            ),
            Error::Shape(msg) => write!(f, "invalid network shape: {msg}"),
            Error::NonFiniteGradient { layer } => {
                write!(f, "non-finite gradient component in layer {layer}")
            }
            Error::InvalidDistribution => write!(f, "invalid probability distribution"),
            Error::InvalidAction(a) => write!(f, "invalid action index {a}"),
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::NoTriggerYet => write!(f, "no trigger recorded yet"),
            Error::InvalidMemory { agent } => {
                write!(f, "sender memory of agent {agent} read before its first trigger")
            }
            Error::TaskMismatch(msg) => write!(f, "task mismatch: {msg}"),
            Error::Diverged { step, consecutive } => write!(
                f,
                "training diverged at step {step}: {consecutive} consecutive evaluations hit the step cap"
            ),
            Error::StaleRollout { expected, got } => write!(
                f,
                "on-policy violation: records from parameter version {got}, current is {expected}"
            ),
        }
    }
}

impl core::error::Error for Error {}
