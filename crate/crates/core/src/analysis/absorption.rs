use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::par::map_replicas;
use crate::particle::CountState;
use crate::rng::{rng_from_seed, split_seed};
use crate::stats::median_estimate;

/// Initial placement for absorption runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitRule {
    /// Particles placed independently and uniformly.
    Iid,
    /// Particles spread as evenly as possible.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionSummary {
    pub sites: usize,
    pub particles: usize,
    pub replicas: usize,
    /// Censored runs count as `+∞`.
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub std_error: f64,
    pub censored: usize,
}

const CLOCK_CHECK_EVENTS: u64 = 4096;

fn absorption_time(
    kernel: &Kernel,
    sites: usize,
    particles: usize,
    init: InitRule,
    seed: u64,
    wall_cap: Duration,
) -> Result<Option<f64>> {
    let mut state = match init {
        InitRule::Iid => CountState::init_iid(kernel.clone(), sites, particles, split_seed(seed, 0))?,
        InitRule::Uniform => CountState::init_uniform(kernel.clone(), sites, particles)?,
    };
    let mut rng = rng_from_seed(split_seed(seed, 1));
    let start = Instant::now();
    while !state.is_absorbed() {
        state.step(&mut rng)?;
        if state.events() % CLOCK_CHECK_EVENTS == 0 && start.elapsed() > wall_cap {
            return Ok(None);
        }
    }
    Ok(Some(state.time()))
}

/// Absorption time statistics for each `L` with `N = round(ρL)`.
///
/// Replica `i` at the `j`-th system size uses seed
/// `split(split(seed, j), i)`. Runs exceeding `wall_cap` are censored.
pub fn absorption_study(
    kernel: &Kernel,
    sizes: &[usize],
    rho: f64,
    replicas: usize,
    seed: u64,
    init: InitRule,
    wall_cap: Duration,
    jobs: Option<usize>,
) -> Result<Vec<AbsorptionSummary>> {
    if replicas == 0 || !(rho > 0.0) {
        return Err(Error::InvalidParameter("need replicas ≥ 1 and ρ > 0".into()));
    }
    sizes
        .iter()
        .enumerate()
        .map(|(j, &sites)| {
            let particles = (rho * sites as f64).round() as usize;
            let size_seed = split_seed(seed, j as u64);
            let times: Vec<Option<f64>> = map_replicas(replicas, jobs, |i| {
                absorption_time(kernel, sites, particles, init, split_seed(size_seed, i as u64), wall_cap)
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let censored = times.iter().filter(|t| t.is_none()).count();
            if censored > 0 {
                log::warn!("L = {sites}: {censored} of {replicas} runs censored at {wall_cap:?}");
            }
            let values: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
            let est = median_estimate(&values);
            Ok(AbsorptionSummary {
                sites,
                particles,
                replicas,
                median: est.median,
                q1: est.q1,
                q3: est.q3,
                std_error: est.std_error,
                censored,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_particle_is_absorbed_at_once() {
        let k = Kernel::product(1.0).unwrap();
        let s = absorption_study(&k, &[5], 0.2, 3, 1, InitRule::Iid, Duration::from_secs(5), Some(1)).unwrap();
        assert_eq!(s[0].particles, 1);
        assert_eq!(s[0].median, 0.0);
        assert_eq!(s[0].censored, 0);
    }

    #[test]
    fn two_site_pair_median_matches_exponential_law() {
        // From (1,1) the only moves lead to (2,0) or (0,2), each at rate 1.
        let k = Kernel::product(1.0).unwrap();
        let s = absorption_study(&k, &[2], 1.0, 4000, 3, InitRule::Uniform, Duration::from_secs(5), None).unwrap();
        let exact = std::f64::consts::LN_2 / 2.0;
        assert!((s[0].median - exact).abs() < 3.0 * s[0].std_error, "{:?}", s[0]);
    }
}
