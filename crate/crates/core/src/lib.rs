//! Two-stage channel estimation and phase design for surface-assisted MIMO
//! links.
//!
//! The crate covers channel generation, pilot design, direct-channel
//! estimation, bilinear sparse recovery of the surface channels,
//! permutation resolution, low-rank completion, phase optimization and a
//! deterministic Monte-Carlo harness around all of it.

pub mod ambiguity;
pub mod badvamp;
pub mod channel;
pub mod completion;
pub mod direct;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod phase;
pub mod training;
pub mod validate;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
