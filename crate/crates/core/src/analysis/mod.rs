//! Statistical checks comparing particle ensembles with the mean-field limit.

mod absorption;
mod chaos;
mod coarsening;
mod ensemble;
mod lln;
mod moments;
mod tagged_study;

pub use absorption::{absorption_study, AbsorptionSummary, InitRule};
pub use chaos::{two_site_chaos_check, ChaosReport};
pub use coarsening::{
    expected_beta, fit_coarsening, fit_exponential, fit_gelation, fit_power_law, CoarseningFit,
    Regime,
};
pub use ensemble::{replica_seeds, run_ensemble, summarize, EnsembleSpec, EnsembleSummary};
pub use lln::{lln_distance, moment_convergence_check, weak_form_residual, LlnGap};
pub use moments::{moment_growth_check, MomentGrowthReport};
pub use tagged_study::{limit_reference, limit_tagged_ensemble, rao_blackwell_tagged_law, tagged_direct_samples};
