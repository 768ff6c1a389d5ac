//! Empirical functionals of a configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particle::CountState;
use crate::stats::CompensatedSum;

/// `F_k = n_k / L`, including `k = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub f_hat: BTreeMap<usize, f64>,
    pub sites: usize,
    pub particles: usize,
}

/// `P_k = k n_k / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBiasedMeasure {
    pub p_hat: BTreeMap<usize, f64>,
    pub particles: usize,
}

impl EmpiricalMeasure {
    pub fn get(&self, k: usize) -> f64 {
        self.f_hat.get(&k).copied().unwrap_or(0.0)
    }

    /// Dense vector `F_0..F_K` with `K` the largest occupied size.
    pub fn to_dense(&self) -> Vec<f64> {
        let len = self.f_hat.keys().next_back().map_or(1, |k| k + 1);
        let mut v = vec![0.0; len];
        for (&k, &f) in &self.f_hat {
            v[k] = f;
        }
        v
    }
}

impl SizeBiasedMeasure {
    pub fn get(&self, k: usize) -> f64 {
        self.p_hat.get(&k).copied().unwrap_or(0.0)
    }
}

/// Empirical measure built from a sparse count map over `sites` sites.
pub fn empirical_from_counts(counts: &BTreeMap<usize, u64>, sites: usize) -> EmpiricalMeasure {
    let occupied: u64 = counts.values().sum();
    let particles = counts.iter().map(|(&k, &n)| k * n as usize).sum();
    let mut f_hat = BTreeMap::new();
    let empty = sites as u64 - occupied;
    if empty > 0 {
        f_hat.insert(0, empty as f64 / sites as f64);
    }
    for (&k, &n) in counts.iter().filter(|&(_, &n)| n > 0) {
        f_hat.insert(k, n as f64 / sites as f64);
    }
    EmpiricalMeasure {
        f_hat,
        sites,
        particles,
    }
}

pub fn empirical_measure(state: &CountState) -> EmpiricalMeasure {
    empirical_from_counts(&state.counts_map(), state.sites())
}

pub fn size_biased_from_counts(counts: &BTreeMap<usize, u64>) -> Result<SizeBiasedMeasure> {
    let particles: usize = counts.iter().map(|(&k, &n)| k * n as usize).sum();
    if particles == 0 {
        return Err(Error::InvalidParameter(
            "size-biased measure needs at least one particle".into(),
        ));
    }
    let p_hat = counts
        .iter()
        .filter(|&(&k, &n)| k > 0 && n > 0)
        .map(|(&k, &n)| (k, (k as u64 * n) as f64 / particles as f64))
        .collect();
    Ok(SizeBiasedMeasure { p_hat, particles })
}

pub fn size_biased_measure(state: &CountState) -> Result<SizeBiasedMeasure> {
    size_biased_from_counts(&state.counts_map())
}

/// `Σ_k k^n n_k / L` from a count map.
pub fn moment_from_counts(counts: &BTreeMap<usize, u64>, sites: usize, n: u32) -> f64 {
    let occupied: u64 = counts.values().sum();
    let mut sum = CompensatedSum::new();
    if n == 0 {
        sum.add((sites as u64 - occupied) as f64);
    }
    for (&k, &c) in counts {
        sum.add((k as f64).powi(n as i32) * c as f64);
    }
    sum.value() / sites as f64
}

pub fn moment(state: &CountState, n: u32) -> f64 {
    moment_from_counts(&state.counts_map(), state.sites(), n)
}

/// `Σ_k F_k h(k)`.
pub fn pair_with<H: Fn(usize) -> f64>(measure: &EmpiricalMeasure, h: H) -> f64 {
    measure.f_hat.iter().map(|(&k, &f)| f * h(k)).collect::<CompensatedSum>().value()
}
