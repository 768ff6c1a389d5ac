use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::observables::{empirical_from_counts, moment_from_counts};
use crate::par::map_replicas;
use crate::particle::{CountState, TrajectoryRecord};
use crate::rng::{rng_from_seed, split_seed};
use crate::stats::{mean, variance};

/// An ensemble of independent count-engine runs from i.i.d. placement.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub kernel: Kernel,
    pub sites: usize,
    pub particles: usize,
    pub t_end: f64,
    pub grid: Vec<f64>,
    pub replicas: usize,
    pub master_seed: u64,
    pub jobs: Option<usize>,
}

/// Replica `i` uses seed `split(master, i)`; its initial placement is drawn
/// from `split(seed, 0)` and its dynamics from `split(seed, 1)`.
pub fn replica_seeds(master: u64, replicas: usize) -> Vec<u64> {
    (0..replicas as u64).map(|i| split_seed(master, i)).collect()
}

pub fn run_ensemble(spec: &EnsembleSpec) -> Result<Vec<TrajectoryRecord>> {
    if spec.replicas == 0 {
        return Err(Error::InvalidParameter("need at least one replica".into()));
    }
    let seeds = replica_seeds(spec.master_seed, spec.replicas);
    map_replicas(spec.replicas, spec.jobs, |i| {
        let seed = seeds[i];
        let mut state = CountState::init_iid(
            spec.kernel.clone(),
            spec.sites,
            spec.particles,
            split_seed(seed, 0),
        )?;
        let mut rng = rng_from_seed(split_seed(seed, 1));
        state.run_until(spec.t_end, &spec.grid, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Per-time ensemble statistics of `F_k` and the coarsening scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub replicas: usize,
    pub sites: usize,
    pub particles: usize,
    /// `F̄_k(t)`, dense in `k`.
    pub mean_f: Vec<Vec<f64>>,
    pub var_f: Vec<Vec<f64>>,
    pub mean_ell: Vec<f64>,
    pub var_ell: Vec<f64>,
}

impl EnsembleSummary {
    /// `Σ k^n F̄_k(t)` at time index `i`.
    pub fn moment(&self, i: usize, n: f64) -> f64 {
        self.mean_f[i]
            .iter()
            .enumerate()
            .map(|(k, &v)| if k == 0 && n > 0.0 { 0.0 } else { (k as f64).powf(n) * v })
            .sum()
    }
}

pub fn summarize(records: &[TrajectoryRecord]) -> Result<EnsembleSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let times: Vec<f64> = first.snapshots.iter().map(|s| s.t).collect();
    for r in records {
        if r.snapshots.len() != times.len()
            || r.snapshots.iter().zip(&times).any(|(s, t)| s.t != *t)
            || r.sites != first.sites
        {
            return Err(Error::GridMismatch(
                "replicas were observed on different grids".into(),
            ));
        }
    }
    let sites = first.sites;
    let mut mean_f = Vec::with_capacity(times.len());
    let mut var_f = Vec::with_capacity(times.len());
    let mut mean_ell = Vec::with_capacity(times.len());
    let mut var_ell = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let dense: Vec<Vec<f64>> = records
            .iter()
            .map(|r| empirical_from_counts(&r.snapshots[i].counts, sites).to_dense())
            .collect();
        let width = dense.iter().map(Vec::len).max().unwrap_or(1);
        let column = |k: usize| -> Vec<f64> {
            dense.iter().map(|v| v.get(k).copied().unwrap_or(0.0)).collect()
        };
        mean_f.push((0..width).map(|k| mean(&column(k))).collect());
        var_f.push((0..width).map(|k| variance(&column(k))).collect());
        let ells: Vec<f64> = records
            .iter()
            .zip(&dense)
            .map(|(r, f)| {
                let rho = moment_from_counts(&r.snapshots[i].counts, sites, 1);
                rho / (1.0 - f[0])
            })
            .collect();
        mean_ell.push(mean(&ells));
        var_ell.push(variance(&ells));
    }
    Ok(EnsembleSummary {
        times,
        replicas: records.len(),
        sites,
        particles: first.particles,
        mean_f,
        var_f,
        mean_ell,
        var_ell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(replicas: usize) -> EnsembleSpec {
        EnsembleSpec {
            kernel: Kernel::product(1.0).unwrap(),
            sites: 50,
            particles: 50,
            t_end: 1.0,
            grid: vec![0.0, 0.5, 1.0],
            replicas,
            master_seed: 11,
            jobs: Some(1),
        }
    }

    #[test]
    fn summary_is_normalized() {
        let records = run_ensemble(&spec(8)).unwrap();
        let s = summarize(&records).unwrap();
        assert_eq!(s.times, vec![0.0, 0.5, 1.0]);
        for i in 0..3 {
            assert!((s.mean_f[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((s.moment(i, 1.0) - 1.0).abs() < 1e-12);
            assert!((s.moment(i, 0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ensembles_are_reproducible_and_job_independent() {
        let a = run_ensemble(&spec(4)).unwrap();
        let b = run_ensemble(&EnsembleSpec {
            jobs: None,
            ..spec(4)
        })
        .unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.snapshots, y.snapshots);
        }
        assert!(run_ensemble(&spec(0)).is_err());
    }
}
