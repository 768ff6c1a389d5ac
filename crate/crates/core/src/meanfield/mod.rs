//! The truncated mean-field hierarchy and its size-biased companion.

mod integrate;
mod rhs;

pub use integrate::{
    integrate, BlowUpFlag, IntegrationStats, MeanFieldRun, OdeControls, Outcome, TruncationPolicy,
};
pub use rhs::{edg_rhs, edg_rhs_product, mu_vector, sbm_rhs, sbm_rhs_product};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::stats::CompensatedSum;

/// Tolerance on `Σ f_k = 1` for user-supplied profiles.
pub const INPUT_NORMALIZATION_TOL: f64 = 1e-6;

/// Probability vector `f_0..f_K` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub f: Vec<f64>,
    pub t: f64,
    /// Target density, the first moment of the initial profile.
    pub rho: f64,
    /// Mass carried past the truncation so far.
    pub leak: f64,
}

/// Size-biased vector indexed by size; `p[0]` is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBiasedState {
    pub p: Vec<f64>,
    pub t: f64,
}

impl MeanFieldState {
    /// Validates a profile: nonnegative, finite, normalized to within
    /// [`INPUT_NORMALIZATION_TOL`], with at least one occupied size.
    pub fn new(f: Vec<f64>, t: f64) -> Result<Self> {
        if f.len() < 2 {
            return Err(Error::InvalidInitial(
                "profile needs entries for sizes 0 and 1".into(),
            ));
        }
        if let Some((k, &v)) = f.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInitial(format!("f_{k} = {v} is not a probability")));
        }
        let total = compensated(&f);
        if (total - 1.0).abs() > INPUT_NORMALIZATION_TOL {
            return Err(Error::InvalidInitial(format!(
                "profile sums to {total}, not 1"
            )));
        }
        let mut state = Self {
            f,
            t,
            rho: 0.0,
            leak: 0.0,
        };
        state.rho = state.mass();
        if state.rho <= 0.0 {
            return Err(Error::InvalidInitial("profile carries no mass".into()));
        }
        Ok(state)
    }

    /// Poisson(ρ) truncated where the remaining tail drops below `1e-16`,
    /// renormalized.
    pub fn poisson(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("density must be positive, got {rho}")));
        }
        let mut f = Vec::new();
        let mut term = (-rho).exp();
        let mut cumulative = 0.0;
        let mut k = 0usize;
        while f.len() < 2 || (1.0 - cumulative > 1e-16 && term > 0.0) || (k as f64) < rho {
            f.push(term);
            cumulative += term;
            k += 1;
            term *= rho / k as f64;
        }
        let total = compensated(&f);
        f.iter_mut().for_each(|v| *v /= total);
        Self::new(f, 0.0)
    }

    /// All mass on sites of size `k`.
    pub fn delta(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInitial("delta at 0 carries no mass".into()));
        }
        let mut f = vec![0.0; k + 1];
        f[k] = 1.0;
        Self::new(f, 0.0)
    }

    pub fn truncation(&self) -> usize {
        self.f.len() - 1
    }

    pub fn get(&self, k: usize) -> f64 {
        self.f.get(k).copied().unwrap_or(0.0)
    }

    /// `Σ f_k`.
    pub fn total(&self) -> f64 {
        compensated(&self.f)
    }

    /// `Σ k f_k`.
    pub fn mass(&self) -> f64 {
        self.f
            .iter()
            .enumerate()
            .map(|(k, &v)| k as f64 * v)
            .collect::<CompensatedSum>()
            .value()
    }

    /// `Σ k^n f_k` for real `n`, with `0^n = 0` for `n > 0`.
    pub fn moment(&self, n: f64) -> f64 {
        self.f
            .iter()
            .enumerate()
            .map(|(k, &v)| if k == 0 && n > 0.0 { 0.0 } else { (k as f64).powf(n) * v })
            .collect::<CompensatedSum>()
            .value()
    }

    /// `μ_k = Σ_{l≥1} c(k,l) f_l`.
    pub fn mu(&self, kernel: &Kernel, k: usize) -> f64 {
        self.f
            .iter()
            .enumerate()
            .skip(1)
            .map(|(l, &v)| kernel.rate(k, l) * v)
            .collect::<CompensatedSum>()
            .value()
    }

    /// `ℓ = ρ / (1 − f_0)` with `ρ` the live first moment.
    pub fn coarsening_scale(&self) -> Result<f64> {
        let occupied = 1.0 - self.f[0];
        if occupied <= 0.0 {
            return Err(Error::InvalidParameter(
                "coarsening scale undefined when f_0 = 1".into(),
            ));
        }
        Ok(self.mass() / occupied)
    }

    /// The size-biased profile `p_k = k f_k / ρ`.
    pub fn size_biased(&self) -> SizeBiasedState {
        let m = self.mass();
        SizeBiasedState {
            p: self
                .f
                .iter()
                .enumerate()
                .map(|(k, &v)| k as f64 * v / m)
                .collect(),
            t: self.t,
        }
    }

    /// Pads with zeros up to truncation `k`.
    pub fn extend_to(&mut self, k: usize) {
        if self.f.len() < k + 1 {
            self.f.resize(k + 1, 0.0);
        }
    }
}

impl SizeBiasedState {
    pub fn new(p: Vec<f64>, t: f64) -> Result<Self> {
        if p.first().is_some_and(|&v| v != 0.0) {
            return Err(Error::InvalidInitial(
                "size-biased profiles charge sizes k ≥ 1 only".into(),
            ));
        }
        if let Some((k, &v)) = p.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInitial(format!("p_{k} = {v} is not a probability")));
        }
        let total = compensated(&p);
        if (total - 1.0).abs() > INPUT_NORMALIZATION_TOL {
            return Err(Error::InvalidInitial(format!(
                "size-biased profile sums to {total}, not 1"
            )));
        }
        Ok(Self { p, t })
    }

    pub fn get(&self, k: usize) -> f64 {
        self.p.get(k).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        compensated(&self.p)
    }
}

fn compensated(v: &[f64]) -> f64 {
    v.iter().copied().collect::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_profile() {
        let s = MeanFieldState::poisson(1.0).unwrap();
        assert!((s.total() - 1.0).abs() < 1e-15);
        assert!((s.mass() - 1.0).abs() < 1e-14);
        assert!((s.f[1] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(MeanFieldState::poisson(0.0).is_err());
    }

    #[test]
    fn validation() {
        assert!(MeanFieldState::new(vec![0.5, 0.4], 0.0).is_err());
        assert!(MeanFieldState::new(vec![0.5, 0.6, -0.1], 0.0).is_err());
        assert!(MeanFieldState::new(vec![1.0, 0.0], 0.0).is_err());
        assert!(MeanFieldState::new(vec![0.5, 0.5 + 5e-7], 0.0).is_ok());
    }

    #[test]
    fn mu_examples() {
        let k = Kernel::product(1.3).unwrap();
        let s = MeanFieldState::delta(1).unwrap();
        for size in 0..6 {
            assert!((s.mu(&k, size) - (size as f64).powf(1.3)).abs() < 1e-12);
        }
        let s = MeanFieldState::delta(2).unwrap();
        assert_eq!(s.mu(&Kernel::product(1.0).unwrap(), 3), 6.0);
        assert_eq!(s.mu(&Kernel::product(1.0).unwrap(), 0), 0.0);
    }

    #[test]
    fn coarsening_examples() {
        let s = MeanFieldState::delta(1).unwrap();
        assert_eq!(s.coarsening_scale().unwrap(), 1.0);
        let s = MeanFieldState::new(vec![0.5, 0.0, 0.5], 0.0).unwrap();
        assert_eq!(s.coarsening_scale().unwrap(), 2.0);
        let s = MeanFieldState::new(vec![0.5, 0.5], 0.0).unwrap();
        assert_eq!(s.coarsening_scale().unwrap(), 1.0);
    }

    #[test]
    fn size_biased_profile() {
        let s = MeanFieldState::new(vec![0.25, 0.5, 0.25], 0.0).unwrap();
        let p = s.size_biased();
        assert_eq!(p.p, vec![0.0, 0.5, 0.5]);
        assert!(SizeBiasedState::new(p.p, 0.0).is_ok());
        assert!(SizeBiasedState::new(vec![0.1, 0.9], 0.0).is_err());
    }
}
