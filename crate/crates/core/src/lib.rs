//! Evidence-pool video temporal grounding on synthetic feature sequences.
//!
//! The pipeline has three trainable stages: predictive temporal perception
//! ([`perception`]), proposal generation and evidence-pool construction
//! ([`proposal`]), and identify-then-measure grounding over the pool
//! ([`grounding`]). [`syndata`] produces the synthetic videos and [`eval`]
//! holds every metric and diagnostic.

pub mod error;
pub mod eval;
pub mod grounding;
pub mod numerics;
pub mod perception;
pub mod proposal;
pub mod syndata;

pub use error::{Error, Result};
