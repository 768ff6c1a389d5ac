//! The particle system with generator
//! `Lg(η) = Σ_{x≠y} c(η_x, η_y)/(L−1) · (g(η^{x→y}) − g(η))` on the complete
//! graph of `L` sites.
//!
//! [`CountState`] is the production engine. On the complete graph the
//! occupation counts `n_k` are a sufficient statistic, so it samples size
//! pairs rather than site pairs. [`SiteState`] keeps the explicit occupation
//! array and is used as an oracle.

mod count;
mod run;
mod site;

pub use count::{CountState, EventDecision, DEFAULT_AUDIT_INTERVAL};
pub use run::{RunOutcome, Snapshot, TrajectoryRecord};
pub use site::{coupled_divergence, site_reference_run, SiteDecision, SiteState, MAX_REFERENCE_SITES};
