//! Exchange-driven growth on the complete graph.
//!
//! The crate has three layers:
//!
//! * [`particle`]: an exact continuous-time Markov chain simulator for the
//!   misanthrope-type particle system, kept in occupation-count space, plus a
//!   site-level reference engine used as an equivalence oracle.
//! * [`meanfield`]: an adaptive Runge–Kutta integrator for the truncated
//!   mean-field hierarchy and its size-biased companion.
//! * [`analysis`]: ensemble statistics that compare the two, fit coarsening
//!   exponents and probe gelation.
//!
//! [`tagged`] follows a single distinguished particle both at finite system
//! size and in the limiting time-inhomogeneous chain.

pub mod analysis;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod meanfield;
pub mod observables;
pub mod par;
pub mod particle;
pub mod rng;
pub mod stats;
pub mod tagged;

pub use error::{Error, Result};
pub use kernel::{GrowthBounds, Kernel};
pub use meanfield::{MeanFieldState, SizeBiasedState};
pub use particle::{CountState, SiteState};
