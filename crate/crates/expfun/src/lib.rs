//! Simulation, estimation and verification toolkit for exponential functionals
//! `I_n = sum_{k<=n} exp(-S_k)` of one-dimensional random walks.
//!
//! The crate is organized around the pipeline used by the CLI:
//!
//! * [`steps`] - step-distribution families with exact analytics where available,
//! * [`tilt`] - Esscher tilting, the Laplace-minimizing tilt parameter and regime
//!   classification,
//! * [`walk`] - trajectory simulation plus exact lattice oracles (dynamic
//!   programming and full path enumeration),
//! * [`renewal`] - renewal functions of the ladder-height processes and the
//!   weighted Laplace integrals / probability measures built from them,
//! * [`conditioned`] - Doob h-transform samplers for walks conditioned to stay
//!   nonnegative and their exponential functionals,
//! * [`estimators`] - variance-reduced Monte Carlo engines for the decaying
//!   expectations and for the limiting constants,
//! * [`asymptote`] - closed-form / truncated-series evaluation of every rate
//!   ingredient (Spitzer's rho, slowly varying corrections, stable density).
//!
//! All Monte Carlo entry points take a master seed and derive counter-based
//! random streams, so results are identical for any worker-pool size.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with the
// out-of-range sign.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptote;
pub mod conditioned;
pub mod error;
pub mod estimators;
pub mod numeric;
pub mod renewal;
pub mod rngs;
pub mod selftest;
pub mod stats;
pub mod steps;
pub mod tilt;
pub mod walk;

pub use error::{Error, Result};
pub use estimators::Estimate;
pub use renewal::RenewalTable;
pub use steps::StepModel;
pub use tilt::{FSpec, RegimeTag, TiltReport};
pub use walk::PathSample;
