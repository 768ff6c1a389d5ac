//! Exchange kernels `c(k, l)`: the rate at which a site holding `k` particles
//! passes one particle to a site holding `l`.
//!
//! Every kernel vanishes on the zero row and column, is symmetric and strictly
//! positive for `k, l ≥ 1`. Growth metadata `(μ, ν, C)` for the bound
//! `c(k,l) ≤ C(k^μ l^ν + k^ν l^μ)` is declared by the caller and checked by
//! [`verify_kernel`] rather than inferred.
//!
//! Non-integer product exponents go through `f64::powf`, so rates may differ
//! across platforms in the last bits.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes below this use precomputed powers in the product kernel.
const POWER_CACHE: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBounds {
    pub mu: f64,
    pub nu: f64,
    pub c: f64,
}

impl GrowthBounds {
    pub fn new(mu: f64, nu: f64, c: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&mu) || !(0.0..=2.0).contains(&nu) {
            return Err(Error::InvalidKernel(format!(
                "growth exponents must lie in [0, 2], got mu = {mu}, nu = {nu}"
            )));
        }
        if mu + nu > 3.0 {
            return Err(Error::InvalidKernel(format!(
                "mu + nu must not exceed 3, got {}",
                mu + nu
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidKernel(format!("C must be positive, got {c}")));
        }
        Ok(Self { mu, nu, c })
    }

    /// `0 ≤ μ, ν ≤ 2` and `μ + ν ≤ 3`.
    pub fn is_admissible(&self) -> bool {
        (0.0..=2.0).contains(&self.mu) && (0.0..=2.0).contains(&self.nu) && self.mu + self.nu <= 3.0
    }

    /// `C(k^μ l^ν + k^ν l^μ)`.
    pub fn bound(&self, k: usize, l: usize) -> f64 {
        let (k, l) = (k as f64, l as f64);
        self.c * (k.powf(self.mu) * l.powf(self.nu) + k.powf(self.nu) * l.powf(self.mu))
    }
}

enum Repr {
    Product { gamma: f64, powers: Vec<f64> },
    /// Dense row-major `(max_size + 1)²` table, filled from the upper triangle.
    Table { max_size: usize, rates: Vec<f64> },
}

/// An immutable exchange kernel. Cloning is cheap.
#[derive(Clone)]
pub struct Kernel {
    repr: Arc<Repr>,
    bounds: GrowthBounds,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.repr {
            Repr::Product { gamma, .. } => write!(f, "Kernel::Product(gamma = {gamma})"),
            Repr::Table { max_size, .. } => write!(
                f,
                "Kernel::Table(max_size = {max_size}, mu = {}, nu = {}, C = {})",
                self.bounds.mu, self.bounds.nu, self.bounds.c
            ),
        }
    }
}

impl Kernel {
    /// The product kernel `c(k,l) = (kl)^γ` for `k, l ≥ 1`.
    ///
    /// Its growth metadata is `μ = ν = γ`, `C = 1/2`, which is tight. For
    /// `γ > 3/2` the metadata falls outside the admissible range (see
    /// [`GrowthBounds::is_admissible`]); such kernels are still accepted so the
    /// gelation regimes can be studied.
    pub fn product(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "product exponent must be nonnegative, got {gamma}"
            )));
        }
        let powers = (0..POWER_CACHE).map(|k| power(k, gamma)).collect();
        Ok(Self {
            repr: Arc::new(Repr::Product { gamma, powers }),
            bounds: GrowthBounds {
                mu: gamma,
                nu: gamma,
                c: 0.5,
            },
        })
    }

    /// Replaces the declared growth metadata.
    pub fn with_bounds(mut self, bounds: GrowthBounds) -> Self {
        self.bounds = bounds;
        self
    }

    /// A kernel read from an explicit upper triangle `(k, l, rate)` with
    /// `k ≤ l ≤ max_size`.
    ///
    /// Every pair `1 ≤ k ≤ l ≤ max_size` must be present with a positive rate.
    /// Entries on the zero row may be omitted and must be zero if given.
    pub fn from_upper_triangle(
        max_size: usize,
        entries: &[(usize, usize, f64)],
        bounds: GrowthBounds,
    ) -> Result<Self> {
        if max_size < 1 {
            return Err(Error::InvalidKernel("table must cover size 1".into()));
        }
        let n = max_size + 1;
        let mut rates = vec![f64::NAN; n * n];
        for k in 0..n {
            rates[k] = 0.0;
            rates[k * n] = 0.0;
        }
        let mut seen = vec![false; n * n];
        for &(k, l, rate) in entries {
            if k > l {
                return Err(Error::InvalidKernel(format!(
                    "entry ({k}, {l}) lies below the diagonal; give the upper triangle only"
                )));
            }
            if l > max_size {
                return Err(Error::InvalidKernel(format!(
                    "entry ({k}, {l}) exceeds the table size {max_size}"
                )));
            }
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(Error::InvalidKernel(format!(
                    "rate at ({k}, {l}) must be finite and nonnegative, got {rate}"
                )));
            }
            if k == 0 && rate != 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "rate at ({k}, {l}) must vanish: empty sites cannot donate"
                )));
            }
            if k > 0 && rate == 0.0 {
                return Err(Error::InvalidKernel(format!(
                    "rate at ({k}, {l}) must be strictly positive"
                )));
            }
            if std::mem::replace(&mut seen[k * n + l], true) {
                return Err(Error::InvalidKernel(format!("duplicate entry ({k}, {l})")));
            }
            rates[k * n + l] = rate;
            rates[l * n + k] = rate;
        }
        if let Some(idx) = rates.iter().position(|r| r.is_nan()) {
            let (k, l) = (idx / n, idx % n);
            return Err(Error::InvalidKernel(format!(
                "missing entry ({}, {})",
                k.min(l),
                k.max(l)
            )));
        }
        Ok(Self {
            repr: Arc::new(Repr::Table { max_size, rates }),
            bounds,
        })
    }

    /// Loads a table kernel from a CSV file with header `k,l,rate`.
    pub fn from_table_csv(path: impl AsRef<Path>, bounds: GrowthBounds) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["k", "l", "rate"] {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("expected header `k,l,rate`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut entries = Vec::new();
        for (i, record) in reader.deserialize::<(usize, usize, f64)>().enumerate() {
            entries.push(record.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: e.to_string(),
            })?);
        }
        let max_size = entries.iter().map(|&(_, l, _)| l).max().unwrap_or(0);
        Self::from_upper_triangle(max_size, &entries, bounds)
    }

    pub fn bounds(&self) -> GrowthBounds {
        self.bounds
    }

    /// `Some(γ)` iff this is the product kernel `(kl)^γ`.
    pub fn separable_gamma(&self) -> Option<f64> {
        match &*self.repr {
            Repr::Product { gamma, .. } => Some(*gamma),
            Repr::Table { .. } => None,
        }
    }

    /// Largest size the kernel is defined for; `None` means unbounded.
    pub fn max_size(&self) -> Option<usize> {
        match &*self.repr {
            Repr::Product { .. } => None,
            Repr::Table { max_size, .. } => Some(*max_size),
        }
    }

    /// Whether every pair of sizes up to `size` can be evaluated.
    pub fn supports(&self, size: usize) -> bool {
        self.max_size().is_none_or(|m| size <= m)
    }

    /// `k^γ` with `0^γ = 0`, for product kernels only.
    #[inline]
    pub fn product_power(&self, k: usize) -> Option<f64> {
        match &*self.repr {
            Repr::Product { gamma, powers } => {
                Some(powers.get(k).copied().unwrap_or_else(|| power(k, *gamma)))
            }
            Repr::Table { .. } => None,
        }
    }

    /// `c(k, l)`.
    ///
    /// # Panics
    ///
    /// For table kernels queried beyond their range; check [`Kernel::supports`]
    /// or use [`Kernel::try_rate`].
    #[inline]
    pub fn rate(&self, k: usize, l: usize) -> f64 {
        match &*self.repr {
            Repr::Product { gamma, powers } => {
                if k == 0 || l == 0 {
                    return 0.0;
                }
                let pk = powers.get(k).copied().unwrap_or_else(|| power(k, *gamma));
                let pl = powers.get(l).copied().unwrap_or_else(|| power(l, *gamma));
                pk * pl
            }
            Repr::Table { max_size, rates } => {
                assert!(
                    k <= *max_size && l <= *max_size,
                    "kernel table covers sizes up to {max_size}, queried ({k}, {l})"
                );
                let n = max_size + 1;
                rates[k.min(l) * n + k.max(l)]
            }
        }
    }

    pub fn try_rate(&self, k: usize, l: usize) -> Result<f64> {
        match self.max_size() {
            Some(max) if k > max || l > max => Err(Error::OutOfTableRange { k, l, max }),
            _ => Ok(self.rate(k, l)),
        }
    }
}

fn power(k: usize, gamma: f64) -> f64 {
    if k == 0 {
        0.0
    } else if gamma == 1.0 {
        k as f64
    } else {
        (k as f64).powf(gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelReport {
    pub symmetry_ok: bool,
    /// Zero row/column and strict positivity off it.
    pub positivity_ok: bool,
    pub bound_ok: bool,
    /// `max c(k,l) / (C(k^μ l^ν + k^ν l^μ))` over `1 ≤ k, l ≤ checked_up_to`.
    pub worst_ratio: f64,
    pub worst_pair: (usize, usize),
    /// `k_max`, clipped to the table range for table kernels.
    pub checked_up_to: usize,
}

/// Exhaustively checks symmetry, positivity and the declared growth bound on
/// `0 ≤ k, l ≤ k_max`.
pub fn verify_kernel(kernel: &Kernel, k_max: usize) -> Result<KernelReport> {
    if k_max < 1 {
        return Err(Error::InvalidParameter("k_max must be at least 1".into()));
    }
    let top = kernel.max_size().map_or(k_max, |m| m.min(k_max));
    let bounds = kernel.bounds();
    let mut report = KernelReport {
        symmetry_ok: true,
        positivity_ok: true,
        bound_ok: true,
        worst_ratio: 0.0,
        worst_pair: (1, 1),
        checked_up_to: top,
    };
    for k in 0..=top {
        for l in 0..=top {
            let c = kernel.rate(k, l);
            if c != kernel.rate(l, k) {
                report.symmetry_ok = false;
            }
            let positivity = if k == 0 || l == 0 { c == 0.0 } else { c > 0.0 };
            report.positivity_ok &= positivity;
            if k >= 1 && l >= 1 {
                let ratio = c / bounds.bound(k, l);
                if ratio > report.worst_ratio {
                    report.worst_ratio = ratio;
                    report.worst_pair = (k, l);
                }
            }
        }
    }
    // Relative slack for rounding in the two power evaluations.
    report.bound_ok = report.worst_ratio <= 1.0 + 1e-12;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_bounds() -> GrowthBounds {
        GrowthBounds::new(1.0, 1.0, 10.0).unwrap()
    }

    #[test]
    fn product_kernel_values() {
        assert_eq!(Kernel::product(1.0).unwrap().rate(2, 3), 6.0);
        assert_eq!(Kernel::product(1.5).unwrap().rate(0, 5), 0.0);
        assert_eq!(Kernel::product(0.5).unwrap().rate(4, 9), 6.0);
        assert_eq!(Kernel::product(0.0).unwrap().rate(0, 3), 0.0);
        assert_eq!(Kernel::product(0.0).unwrap().rate(7, 3), 1.0);
        assert!(Kernel::product(-0.1).is_err());
        assert_eq!(Kernel::product(1.2).unwrap().separable_gamma(), Some(1.2));
    }

    #[test]
    fn product_kernel_metadata() {
        let k = Kernel::product(1.25).unwrap();
        assert_eq!(k.bounds(), GrowthBounds { mu: 1.25, nu: 1.25, c: 0.5 });
        assert!(k.bounds().is_admissible());
        assert!(!Kernel::product(1.75).unwrap().bounds().is_admissible());
    }

    #[test]
    fn table_kernel_lookup() {
        let entries = [(1, 1, 2.0), (1, 2, 5.0), (2, 2, 3.0)];
        let k = Kernel::from_upper_triangle(2, &entries, unit_bounds()).unwrap();
        assert_eq!(k.rate(1, 1), 2.0);
        assert_eq!(k.rate(1, 0), 0.0);
        assert_eq!(k.rate(2, 1), 5.0);
        assert!(matches!(k.try_rate(3, 1), Err(Error::OutOfTableRange { .. })));
        assert_eq!(k.separable_gamma(), None);
        assert!(k.supports(2) && !k.supports(3));
    }

    #[test]
    fn table_kernel_rejects_bad_input() {
        let b = unit_bounds();
        assert!(Kernel::from_upper_triangle(1, &[(0, 1, 1.0), (1, 1, 1.0)], b).is_err());
        assert!(Kernel::from_upper_triangle(1, &[(1, 1, -1.0)], b).is_err());
        assert!(Kernel::from_upper_triangle(2, &[(2, 1, 1.0), (1, 1, 1.0), (2, 2, 1.0)], b).is_err());
        assert!(Kernel::from_upper_triangle(2, &[(1, 1, 1.0), (2, 2, 1.0)], b).is_err());
        assert!(Kernel::from_upper_triangle(1, &[(1, 1, 0.0)], b).is_err());
        assert!(Kernel::from_upper_triangle(1, &[(1, 1, 1.0), (1, 1, 1.0)], b).is_err());
    }

    #[test]
    #[should_panic(expected = "covers sizes up to")]
    fn table_kernel_panics_out_of_range() {
        let k = Kernel::from_upper_triangle(1, &[(1, 1, 1.0)], unit_bounds()).unwrap();
        k.rate(1, 2);
    }

    #[test]
    fn table_kernel_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kernel.csv");
        std::fs::write(&path, "k,l,rate\n1,1,2\n1,2,5\n2,2,3\n0,2,0\n").unwrap();
        let k = Kernel::from_table_csv(&path, unit_bounds()).unwrap();
        assert_eq!(k.rate(2, 1), 5.0);
        assert_eq!(k.max_size(), Some(2));

        std::fs::write(&path, "a,b,c\n1,1,2\n").unwrap();
        assert!(matches!(Kernel::from_table_csv(&path, unit_bounds()), Err(Error::Parse { .. })));
        std::fs::write(&path, "k,l,rate\n1,1,x\n").unwrap();
        assert!(matches!(
            Kernel::from_table_csv(&path, unit_bounds()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn growth_bounds_validation() {
        assert!(GrowthBounds::new(2.0, 1.0, 1.0).is_ok());
        assert!(GrowthBounds::new(2.0, 1.5, 1.0).is_err());
        assert!(GrowthBounds::new(2.5, 0.0, 1.0).is_err());
        assert!(GrowthBounds::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn verify_product_kernel() {
        let report = verify_kernel(&Kernel::product(1.0).unwrap(), 50).unwrap();
        assert!(report.symmetry_ok && report.positivity_ok && report.bound_ok);
        assert_eq!(report.worst_ratio, 1.0);
    }

    #[test]
    fn verify_detects_understated_bound() {
        let k = Kernel::product(1.6)
            .unwrap()
            .with_bounds(GrowthBounds::new(1.5, 1.5, 0.5).unwrap());
        let report = verify_kernel(&k, 10).unwrap();
        assert!(!report.bound_ok);
        // 2^3.2 > ½·2·2^3 at (2, 2).
        assert!(k.rate(2, 2) / k.bounds().bound(2, 2) > 1.0);
        assert!(report.symmetry_ok);
    }

    #[test]
    fn verify_trivial_range() {
        let report = verify_kernel(&Kernel::product(0.7).unwrap(), 1).unwrap();
        assert!(report.symmetry_ok);
        assert!(verify_kernel(&Kernel::product(0.7).unwrap(), 0).is_err());
    }

    proptest! {
        #[test]
        fn product_kernel_is_symmetric_and_separable(gamma in 0.0f64..2.0, k in 0usize..1000, l in 0usize..1000) {
            let c = Kernel::product(gamma).unwrap();
            prop_assert_eq!(c.rate(k, l), c.rate(l, k));
            prop_assert_eq!(c.rate(0, l), 0.0);
            prop_assert_eq!(c.rate(k, 0), 0.0);
            if k >= 1 && l >= 1 {
                let lhs = c.rate(k, l) * c.rate(1, 1);
                let rhs = c.rate(k, 1) * c.rate(1, l);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
            }
        }

        #[test]
        fn table_kernel_is_symmetric(vals in prop::collection::vec(0.1f64..10.0, 6)) {
            let entries = [
                (1, 1, vals[0]), (1, 2, vals[1]), (1, 3, vals[2]),
                (2, 2, vals[3]), (2, 3, vals[4]), (3, 3, vals[5]),
            ];
            let c = Kernel::from_upper_triangle(3, &entries, unit_bounds()).unwrap();
            for k in 0..=3 {
                for l in 0..=3 {
                    prop_assert_eq!(c.rate(k, l), c.rate(l, k));
                }
            }
        }
    }
}
