//! Re-identification and reconstruction attacks against tabular synthetic data.
//!
//! The crate covers both sides of an audit:
//!
//! * attacker side: density ranking of synthetic rows by the harmonic mean of
//!   their k-nearest-neighbour distances ([`selection`]), optional re-ranking
//!   with a prediction loss ([`predictor`]), and per-sample NSGA-II
//!   reconstruction ([`nsga2`]);
//! * scenario side: sample providers for the three attacker capability levels
//!   ([`provider`]);
//! * defender side: unique targets, hit rate and distance to closest record
//!   ([`metrics`]), plus comparison attacks ([`baselines`]).
//!
//! [`run`] wires everything into the `attack`, `evaluate`, `generate` and
//! `report` commands exposed by the `synthleak` binary.

pub mod baselines;
pub mod decimal;
pub mod error;
pub mod metrics;
pub mod nsga2;
pub mod planted;
pub mod predictor;
pub mod provider;
pub mod run;
pub mod selection;
pub mod tabular;

pub use error::{Error, ErrorClass, Result};
