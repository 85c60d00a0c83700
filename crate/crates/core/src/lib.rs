//! Private and collaborative Kaplan-Meier estimation on discretized time grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`survival`]: exact survival representations (dataset, KM curve, event
//!   probability mass, per-bin count matrix) and the lossless conversions
//!   between them.
//! - [`spectral`]: orthonormal DCT-II and its inverse.
//! - [`noise`] and [`mechanisms`]: a seeded Laplace source, sensitivity bounds,
//!   isotonic projection and the three release mechanisms (DP-Surv, DP-Prob,
//!   DP-Matrix).
//! - [`surrogate`]: reconstruction of a surrogate dataset from a probability
//!   mass vector.
//! - [`metrics`]: logrank test, Greenwood variance, exp-log-log bands, median
//!   survival, survival percentages and bootstrap CIs.
//! - [`collab`]: multi-client simulation over the seven collaboration paths and
//!   the Monte-Carlo driver.

pub mod collab;
pub mod error;
pub mod mechanisms;
pub mod metrics;
pub mod noise;
pub mod spectral;
pub mod surrogate;
pub mod survival;

pub use error::{Error, Result};
pub use survival::{CountMatrix, KmCurve, ProbMass, SurvivalDataset, SurvivalRecord, TimeGrid};
