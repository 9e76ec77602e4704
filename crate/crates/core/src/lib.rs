//! Min-entropy estimation for bit sources.
//!
//! The pipeline is: pack bits into `L`-bit blocks ([`ingest`]), turn the
//! blocks into a distance stream and a test statistic ([`stats`]), then
//! invert a key equation for the largest block probability ([`estimators`]).
//!
//! ```
//! use minent::estimators::{estimate, EstimatorKind, EstimatorSpec};
//! use minent::sources::{sample, SourceFamily, SourceSpec};
//!
//! let spec = SourceSpec::new(SourceFamily::Bms { p: 0.5 }, 1, 20_000, 6);
//! let blocks = sample(&spec).unwrap();
//! let est = estimate(&EstimatorSpec::new(EstimatorKind::Collision), &blocks).unwrap();
//! assert!(est.per_bit > 0.8);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod ingest;
pub mod online;
pub mod sources;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{estimate, EstimatorKind, EstimatorSpec, MinEntropyEstimate};
pub use ingest::{pack_blocks, BitSequence, BlockSequence};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/entropies.md")]
    mod entropies {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/collision.md")]
    mod collision {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
