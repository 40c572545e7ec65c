//! Computationally hard, information-theoretically easy robust classification.
//!
//! The crate builds planted-subspace distribution pairs whose low-order
//! moments agree with a standard Gaussian, simulates statistical-query
//! access to them, and provides the certificates needed to check the
//! robustness, correlation and covering-number properties numerically.
//!
//! Module map:
//!
//! * [`quad1d`]: Gauss–Hermite rules and the smoothed one-dimensional pair.
//! * [`geometry`]: near-orthogonal subspace families and the Hadamard rotation.
//! * [`instance`]: the planted `d`-dimensional instances and their samplers.
//! * [`sqsim`]: statistical-query oracle, query ledger and distinguishing game.
//! * [`learners`]: classifiers, robust losses, robust ERM and attacks.
//! * [`correlation`]: chi-correlation computations.
//! * [`covers`]: TV / bottleneck distances, two-distance covers and
//!   generative-model cover bounds.

pub mod correlation;
pub mod covers;
pub mod error;
pub mod geometry;
pub mod instance;
pub mod learners;
pub mod numeric;
pub mod quad1d;
pub mod rng;
pub mod sqsim;
pub mod stats;

mod serde_matrix;

pub use error::{Error, Result};
