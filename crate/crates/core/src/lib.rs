//! Critical Galton-Watson processes with overlapping generations.
//!
//! The crate covers four layers:
//!
//! * [`lifelaw`]: individual life laws and the derived parameters `a`, `b`, `d`, `h`, `c`;
//! * [`exact`]: dynamic programming for survival probabilities, multi-time
//!   generating functions and survival-conditioned joint pmfs;
//! * [`simulator`]: seeded, thread-count-independent Monte Carlo;
//! * [`limitlaw`]: the limiting pure death process coming down from infinity.
//!
//! [`verify`] ties them together into reproducible pass/fail reports.
//!
//! Numerical code in [`series`], [`limitlaw`] and the DP core is generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix the usual `f64` choice.

pub mod error;
pub mod exact;
pub mod lifelaw;
pub mod limitlaw;
pub mod report;
pub mod scalar;
pub mod series;
pub mod simulator;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision truncated series.
pub type Series = series::TruncatedSeries<f64>;
/// Single-precision truncated series.
pub type Series32 = series::TruncatedSeries<f32>;
/// Double-precision limit-law parameters.
pub type Limit = limitlaw::LimitParams<f64>;
/// Double-precision limit-law query.
pub type Query = limitlaw::FddQuery<f64>;
/// Double-precision law of `T`.
pub type TimeLaw = limitlaw::LawT<f64>;
