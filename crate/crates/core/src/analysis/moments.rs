use serde::{Deserialize, Serialize};

use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGrowthReport {
    pub n: f64,
    /// `(t, m_n(t)/m_n(0))`.
    pub ratios: Vec<(f64, f64)>,
    /// `max_t ln(m_n(t)/m_n(0))/t` over `t > 0`: the smallest `C` with
    /// `m_n(t) ≤ m_n(0)e^{Ct}` on the grid.
    pub fitted_rate: f64,
    pub bounded: bool,
    /// R² of `m_n^{(3−2γ)/n}` against an affine function of `t`, for product
    /// kernels with `n > γ > 1`.
    pub polynomial_r_squared: Option<f64>,
    pub polynomial_fit: Option<(f64, f64)>,
}

/// Growth of `m_n(t)` given as `(t, m_n(t))` pairs starting at `t = 0`.
pub fn moment_growth_check(
    series: &[(f64, f64)],
    n: f64,
    product_gamma: Option<f64>,
) -> MomentGrowthReport {
    let m0 = series.first().map(|p| p.1).unwrap_or(f64::NAN);
    let ratios: Vec<(f64, f64)> = series.iter().map(|&(t, m)| (t, m / m0)).collect();
    let fitted_rate = ratios
        .iter()
        .filter(|(t, _)| *t > 0.0)
        .map(|(t, r)| r.ln() / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let bounded = ratios.iter().all(|(_, r)| r.is_finite()) && fitted_rate.is_finite();
    let poly = product_gamma
        .filter(|&g| n > g && g > 1.0 && g < 1.5 && series.len() >= 3)
        .map(|g| {
            let e = (3.0 - 2.0 * g) / n;
            let t: Vec<f64> = series.iter().map(|p| p.0).collect();
            let y: Vec<f64> = series.iter().map(|p| p.1.powf(e)).collect();
            linear_fit(&t, &y)
        });
    MomentGrowthReport {
        n,
        ratios,
        fitted_rate,
        bounded,
        polynomial_r_squared: poly.map(|f: LinearFit| f.r_squared),
        polynomial_fit: poly.map(|f| (f.intercept, f.slope)),
    }
}
