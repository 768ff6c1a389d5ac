use anyhow::Result;
use edg_core::analysis::{replica_seeds, run_ensemble, summarize, EnsembleSpec};
use edg_core::io::{
    write_moments_csv, write_profile_csv, write_summary_csv, write_trajectory_jsonl, SummaryRow,
};
use log::info;

use crate::config::RunConfig;
use crate::output::{create, provenance, write_report};

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let spec = EnsembleSpec {
        kernel: cfg.kernel.build()?,
        sites: cfg.sites,
        particles: cfg.particles,
        t_end: cfg.t_end,
        grid: cfg.grid.clone(),
        replicas: cfg.replicas,
        master_seed: cfg.seed,
        jobs: cfg.jobs,
    };
    let records = run_ensemble(&spec)?;
    let prov = provenance(cfg)?;
    let seeds = replica_seeds(cfg.seed, cfg.replicas);
    let dir = cfg.out.join("trajectories");
    for (i, (record, seed)) in records.iter().zip(&seeds).enumerate() {
        write_trajectory_jsonl(create(&dir, &format!("replica_{i:05}.jsonl"))?, &prov, i, *seed, record)?;
    }
    let summary = summarize(&records)?;
    let profiles: Vec<(f64, Vec<f64>)> = summary
        .times
        .iter()
        .copied()
        .zip(summary.mean_f.iter().cloned())
        .collect();
    write_profile_csv(create(&cfg.out, "F_k.csv")?, &prov, "F_k", &profiles)?;
    let moments: Vec<(f64, u32, f64)> = (0..summary.times.len())
        .flat_map(|i| (0..=3u32).map(move |n| (i, n)))
        .map(|(i, n)| (summary.times[i], n, summary.moment(i, f64::from(n))))
        .collect();
    write_moments_csv(create(&cfg.out, "moments.csv")?, &prov, &moments)?;
    let rows: Vec<SummaryRow> = profiles
        .iter()
        .map(|(t, f)| SummaryRow::from_profile(*t, f, cfg.kernel.gamma(), 0.0))
        .collect();
    write_summary_csv(create(&cfg.out, "summary.csv")?, &prov, &rows)?;
    write_report(&cfg.out, "ensemble.json", &prov, &summary)?;
    let events: u64 = records.iter().map(|r| r.events).sum();
    info!("{} replicas, {events} events, output in {}", records.len(), cfg.out.display());
    Ok(())
}
