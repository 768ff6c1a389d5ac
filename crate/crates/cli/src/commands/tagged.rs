use anyhow::{bail, Result};
use edg_core::analysis::limit_tagged_ensemble;
use edg_core::grid::uniform_grid;
use edg_core::io::{write_comparison_csv, write_tagged_jsonl};
use edg_core::meanfield::integrate;
use edg_core::par::map_replicas;
use edg_core::rng::{rng_from_seed, split_seed};
use edg_core::tagged::{init_tagged, tagged_law_tv, Driver, TaggedComparison, TaggedPoint};
use edg_core::CountState;
use log::warn;

use super::initial_profile;
use crate::config::{parse_placement, RunConfig};
use crate::output::{create, provenance};

const DRIVER_STEPS: usize = 400;

/// Replica `i` places `N − 1` particles from `split(split(seed, i), 0)` and
/// draws the tagged placement and dynamics from `split(split(seed, i), 1)`.
/// Limit-chain replica `i` uses `split(split(seed, u64::MAX), i)`.
pub fn tagged(cfg: &RunConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let placement = parse_placement(&cfg.tagged.placement)?;
    if !placement.is_admissible() {
        warn!("placement `{}` does not match the limit initial law", cfg.tagged.placement);
    }
    if cfg.particles == 0 {
        bail!("system: the tagged particle needs N ≥ 1");
    }
    let paths: Vec<Vec<TaggedPoint>> = map_replicas(cfg.replicas, cfg.jobs, |i| {
        let s = split_seed(cfg.seed, i as u64);
        let base = CountState::init_iid(kernel.clone(), cfg.sites, cfg.particles - 1, split_seed(s, 0))?;
        let mut rng = rng_from_seed(split_seed(s, 1));
        let mut state = init_tagged(&base, placement, &mut rng)?;
        Ok(state.run_until(cfg.t_end, &cfg.grid, &mut rng)?.points)
    })
    .into_iter()
    .collect::<edg_core::Result<_>>()?;
    let prov = provenance(cfg)?;
    let indexed: Vec<(usize, Vec<TaggedPoint>)> = paths.iter().cloned().enumerate().collect();
    write_tagged_jsonl(create(&cfg.out, "tagged.jsonl")?, &prov, &indexed)?;

    let f0 = initial_profile(cfg)?;
    let p0 = f0.size_biased();
    let controls = cfg.ode.controls();
    let reference = integrate(&f0, &kernel, cfg.t_end, &controls, Some(&p0), &cfg.grid)?;
    let rows: Vec<TaggedComparison> = reference
        .size_biased
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let samples: Vec<usize> = paths.iter().map(|path| path[j].w).collect();
            TaggedComparison {
                t: p.t,
                tv: tagged_law_tv(&samples, &p.p),
                sites: cfg.sites,
                replicas: cfg.replicas,
            }
        })
        .collect();
    write_comparison_csv(create(&cfg.out, "comparison.csv")?, &prov, &rows)?;

    if cfg.t_end > 0.0 {
        let driver_grid = uniform_grid(0.0, cfg.t_end, DRIVER_STEPS);
        let driver_run = integrate(&f0, &kernel, cfg.t_end, &controls, None, &driver_grid)?;
        if driver_run.outcome.blow_up_time().is_some() {
            warn!("mean-field driver stopped early; limit chain skipped");
        } else {
            let driver = Driver::from_run(kernel.clone(), &driver_run)?;
            let limit = limit_tagged_ensemble(
                &driver,
                &p0.p,
                cfg.t_end,
                &cfg.grid,
                cfg.tagged.limit_replicas,
                split_seed(cfg.seed, u64::MAX),
                cfg.jobs,
            )?;
            let indexed: Vec<(usize, Vec<TaggedPoint>)> = limit.into_iter().enumerate().collect();
            write_tagged_jsonl(create(&cfg.out, "limit_tagged.jsonl")?, &prov, &indexed)?;
        }
    }
    Ok(())
}
