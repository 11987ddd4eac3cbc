use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{name} = {value} is outside the domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// A configuration or input object violates one of its invariants.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    /// No source emits pulses with this photon number.
    #[error("source posterior undefined for n = {n}: no source emits {n}-photon pulses")]
    UndefinedPosterior { n: usize },

    #[error("attack law returned {detections} detections for {pulses} pulses at n = {n}")]
    AttackContract { n: usize, detections: u64, pulses: u64 },

    #[error("attack law returned {got} photon classes, expected {expected}")]
    AttackShape { expected: usize, got: usize },

    #[error("block size tau^2 = {block} exceeds the {pulses} available pulses")]
    DegenerateBlocking { block: u64, pulses: u64 },

    /// The observed counts admit no consistent explanation; the protocol
    /// aborts.
    #[error("constraints are infeasible: {0}")]
    Infeasible(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain { name, value, domain }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }
}
