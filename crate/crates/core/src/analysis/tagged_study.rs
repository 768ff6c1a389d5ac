use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::meanfield::{integrate, MeanFieldState, OdeControls};
use crate::observables::size_biased_measure;
use crate::par::map_replicas;
use crate::particle::CountState;
use crate::rng::{rng_from_seed, split_seed};
use crate::tagged::{init_tagged, simulate_limit_tagged, Driver, Placement, TaggedPoint};
use rand::Rng;

fn particles_for(sites: usize, rho: f64) -> Result<usize> {
    let n = (rho * sites as f64).round() as usize;
    if n == 0 {
        return Err(Error::InvalidParameter(format!("ρL = {} rounds to no particles", rho * sites as f64)));
    }
    Ok(n)
}

/// `W^L(t)` per replica: `round(ρL) − 1` particles placed i.i.d. uniformly,
/// then the tagged particle on a uniform site.
pub fn tagged_direct_samples(
    kernel: &Kernel,
    sites: usize,
    rho: f64,
    t: f64,
    replicas: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<usize>> {
    let n = particles_for(sites, rho)?;
    map_replicas(replicas, jobs, |i| {
        let s = split_seed(seed, i as u64);
        let base = CountState::init_iid(kernel.clone(), sites, n - 1, split_seed(s, 0))?;
        let mut rng = rng_from_seed(split_seed(s, 1));
        let mut state = init_tagged(&base, Placement::UniformSite, &mut rng)?;
        let run = state.run_until(t, &[t], &mut rng)?;
        run.points
            .last()
            .map(|p| p.w)
            .ok_or_else(|| Error::InvalidParameter("no observation recorded".into()))
    })
    .into_iter()
    .collect()
}

/// Law of `W^L(t)` as the ensemble mean of the size-biased measure.
///
/// Placing all `round(ρL)` particles i.i.d. and tagging one uniformly is the
/// same as uniform tagged placement, and given the configuration the tagged
/// site has size `k` with probability `P^L_k`.
pub fn rao_blackwell_tagged_law(
    kernel: &Kernel,
    sites: usize,
    rho: f64,
    t: f64,
    replicas: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<f64>> {
    let n = particles_for(sites, rho)?;
    let laws: Vec<Vec<f64>> = map_replicas(replicas, jobs, |i| {
        let s = split_seed(seed, i as u64);
        let mut state = CountState::init_iid(kernel.clone(), sites, n, split_seed(s, 0))?;
        let mut rng = rng_from_seed(split_seed(s, 1));
        state.run_until(t, &[], &mut rng)?;
        let p = size_biased_measure(&state)?;
        let width = p.p_hat.keys().next_back().map_or(1, |k| k + 1);
        Ok((0..width).map(|k| p.get(k)).collect())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let width = laws.iter().map(Vec::len).max().unwrap_or(1);
    let mut mean = vec![0.0; width];
    for law in &laws {
        for (k, v) in law.iter().enumerate() {
            mean[k] += v / laws.len() as f64;
        }
    }
    Ok(mean)
}

/// `p(t)` from the size-biased equation with `f(0) = Poisson(ρ)` and
/// `p(0) = k f_k(0)/ρ`.
pub fn limit_reference(kernel: &Kernel, rho: f64, t: f64, controls: &OdeControls) -> Result<Vec<f64>> {
    let f0 = MeanFieldState::poisson(rho)?;
    let p0 = f0.size_biased();
    let run = integrate(&f0, kernel, t, controls, Some(&p0), &[t])?;
    run.size_biased
        .last()
        .map(|p| p.p.clone())
        .ok_or_else(|| Error::InvalidParameter("integration stopped before t".into()))
}

/// Limit-chain paths with `Ŵ(0)` drawn from `p0`, one per replica, observed
/// on `grid`. Replica `i` uses the stream `split(seed, i)`.
pub fn limit_tagged_ensemble(
    driver: &Driver,
    p0: &[f64],
    t_end: f64,
    grid: &[f64],
    replicas: usize,
    seed: u64,
    jobs: Option<usize>,
) -> Result<Vec<Vec<TaggedPoint>>> {
    let total: f64 = p0.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInitial("initial tagged law carries no mass".into()));
    }
    map_replicas(replicas, jobs, |i| {
        let mut rng = rng_from_seed(split_seed(seed, i as u64));
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut w0 = p0.len() - 1;
        for (k, v) in p0.iter().enumerate().skip(1) {
            acc += v;
            if target < acc {
                w0 = k;
                break;
            }
        }
        simulate_limit_tagged(w0, driver, t_end, grid, &mut rng)
    })
    .into_iter()
    .collect()
}
