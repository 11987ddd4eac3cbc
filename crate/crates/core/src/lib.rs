//! Decoy-state QKD analysis: session simulation under photon-number-splitting
//! attacks, including attacks that correlate pulses, and finite-size lower
//! bounds on vacuum and single-photon detections and on the secure key rate.
//!
//! Probability primitives are generic over [`scalar::Real`]; simulation and
//! the bound solver run in `f64`, for which the crate root re-exports aliases.

pub mod attacks;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use attacks::{AttackKind, AttackSpec, DetectionLaw, PublicTranscript, SessionRecord};
pub use error::{Error, Result};
pub use estimator::{
    EpsilonBudget, EstimationResult, KeyRateParams, SolveReport, SolverOptions, SolverStatus,
};
pub use rng::RngStream;

pub type SourceSpec = channel::SourceSpec<f64>;
pub type ChannelParams = channel::ChannelParams<f64>;
pub type ProtocolConfig = channel::ProtocolConfig<f64>;
pub type VarianceReport = attacks::VarianceReport<f64>;
pub type TailBoundParams = stats::TailBoundParams<f64>;
pub type BoundParams = estimator::BoundParams<f64>;
