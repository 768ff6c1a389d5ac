use serde::{Deserialize, Serialize};

use super::ensemble::EnsembleSummary;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::meanfield::MeanFieldState;
use crate::stats::{l1_distance, sup_distance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlnGap {
    pub t: f64,
    pub sup: f64,
    pub l1: f64,
}

fn check_grids(ens: &EnsembleSummary, mf: &[MeanFieldState]) -> Result<()> {
    if ens.times.len() != mf.len()
        || ens
            .times
            .iter()
            .zip(mf)
            .any(|(t, s)| (t - s.t).abs() > 1e-9 * t.abs().max(1.0))
    {
        return Err(Error::GridMismatch(format!(
            "ensemble has {} times, mean-field trajectory has {}",
            ens.times.len(),
            mf.len()
        )));
    }
    Ok(())
}

/// `sup_k |F̄_k − f_k|` and `Σ_k |F̄_k − f_k|` per grid time.
pub fn lln_distance(ens: &EnsembleSummary, mf: &[MeanFieldState]) -> Result<Vec<LlnGap>> {
    check_grids(ens, mf)?;
    Ok(ens
        .times
        .iter()
        .zip(&ens.mean_f)
        .zip(mf)
        .map(|((&t, fbar), s)| LlnGap {
            t,
            sup: sup_distance(fbar, &s.f),
            l1: l1_distance(fbar, &s.f),
        })
        .collect())
}

/// `Σ_k k^n |F̄_k − f_k|` per grid time.
pub fn moment_convergence_check(
    ens: &EnsembleSummary,
    mf: &[MeanFieldState],
    n: u32,
) -> Result<Vec<(f64, f64)>> {
    check_grids(ens, mf)?;
    Ok(ens
        .times
        .iter()
        .zip(&ens.mean_f)
        .zip(mf)
        .map(|((&t, fbar), s)| {
            let len = fbar.len().max(s.f.len());
            let gap = (0..len)
                .map(|k| {
                    let a = fbar.get(k).copied().unwrap_or(0.0);
                    let b = s.f.get(k).copied().unwrap_or(0.0);
                    (k as f64).powi(n as i32) * (a - b).abs()
                })
                .sum();
            (t, gap)
        })
        .collect())
}

/// `|⟨F̄(t),h⟩ − ⟨F̄(0),h⟩ − ∫₀ᵗ Σ_k μ_k(F̄) (h(k+1) − 2h(k) + h(k−1)) F̄_k ds|`
/// with the time integral by the trapezoidal rule over grid indices
/// `0..=upto`. The `k = 0` term drops out since `μ_0 = 0`.
pub fn weak_form_residual<H: Fn(usize) -> f64>(
    ens: &EnsembleSummary,
    kernel: &Kernel,
    h: H,
    upto: usize,
) -> Result<f64> {
    if upto >= ens.times.len() {
        return Err(Error::GridMismatch(format!(
            "time index {upto} beyond the {} grid times",
            ens.times.len()
        )));
    }
    let pairing = |i: usize| -> f64 { ens.mean_f[i].iter().enumerate().map(|(k, &f)| f * h(k)).sum() };
    let integrand = |i: usize| -> f64 {
        let f = &ens.mean_f[i];
        let mut total = 0.0;
        for k in 1..f.len() {
            if f[k] == 0.0 {
                continue;
            }
            let mu: f64 = (1..f.len()).map(|l| kernel.rate(k, l) * f[l]).sum();
            total += mu * (h(k + 1) - 2.0 * h(k) + h(k - 1)) * f[k];
        }
        total
    };
    let values: Vec<f64> = (0..=upto).map(integrand).collect();
    let integral: f64 = (1..=upto)
        .map(|i| 0.5 * (values[i] + values[i - 1]) * (ens.times[i] - ens.times[i - 1]))
        .sum();
    Ok((pairing(upto) - pairing(0) - integral).abs())
}
