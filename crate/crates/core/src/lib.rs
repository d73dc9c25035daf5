//! Random-walk model of research productivity.
//!
//! A career is a sequence of adjusted annual productivities `q_t >= 0`. The
//! first year is exponential, and each later year adds a Laplace-distributed
//! increment whose scale and mode depend on the career stage. The walk is
//! kept nonnegative either by truncating the increment distribution or by
//! censoring (clamping) at zero.
//!
//! The crate covers both directions:
//!
//! * [`model`] and [`distributions`] simulate trajectories from a
//!   [`model::CareerModel`].
//! * [`fitting`] recovers a model from trajectories by enumerating change
//!   points, fitting each stage by maximum likelihood and selecting by AIC.
//! * [`classify`] labels single trajectories as canonical (early rise, slow
//!   decline) with a piecewise-linear AICc classifier.
//! * [`stats`] holds the two-sample tests and ensemble summaries used to
//!   compare simulated and observed ensembles.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the companion `careerwalk-cli` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![warn(missing_docs)]

extern crate alloc;

mod error;
pub mod classify;
pub mod distributions;
pub mod fitting;
pub mod math;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
