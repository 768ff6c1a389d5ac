//! The occupation number `W` of the site holding a tagged particle.

mod compare;
mod finite;
mod limit;
mod oracle;

pub use compare::{law_from_samples, tagged_law_tv, TaggedComparison};
pub use finite::{
    generator_full, generator_from_rates, generator_reduced, init_tagged, Placement,
    TaggedCountState, TaggedDecision, TaggedPoint, TaggedRates, TaggedTrajectory,
};
pub use limit::{limit_tagged_rates, simulate_limit_tagged, Driver, LimitRates};
pub use oracle::SiteTaggedState;
