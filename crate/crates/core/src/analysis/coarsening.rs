use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `ℓ ∝ t^β`, `γ < 3/2`.
    PowerLaw,
    /// `log ℓ` linear in `t`, `γ = 3/2`.
    Exponential,
    /// `ℓ ∝ (T_gel − t)^β`, `3/2 < γ ≤ 2`.
    Gelation,
    /// `γ > 2`: no solution to fit.
    Instantaneous,
}

impl Regime {
    pub fn of(gamma: f64) -> Self {
        if gamma < 1.5 {
            Regime::PowerLaw
        } else if gamma == 1.5 {
            Regime::Exponential
        } else if gamma <= 2.0 {
            Regime::Gelation
        } else {
            Regime::Instantaneous
        }
    }
}

/// `1/(3 − 2γ)`; `None` at `γ = 3/2`.
pub fn expected_beta(gamma: f64) -> Option<f64> {
    (gamma != 1.5).then(|| 1.0 / (3.0 - 2.0 * gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseningFit {
    pub regime: Regime,
    /// Exponent, or the growth rate in the exponential regime.
    pub beta_hat: f64,
    pub beta_expected: Option<f64>,
    pub r_squared: f64,
    pub t_gel: Option<f64>,
    pub window: (f64, f64),
    pub points: usize,
    /// `ℓ_max/ℓ_min` over the whole input.
    pub dynamic_range: f64,
}

fn positive(times: &[f64], ell: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.len() != ell.len() {
        return Err(Error::InvalidParameter("times and ℓ differ in length".into()));
    }
    let (t, l): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(ell)
        .filter(|(t, l)| **t > 0.0 && l.is_finite() && **l > 0.0)
        .map(|(t, l)| (*t, *l))
        .unzip();
    if t.len() < 3 {
        return Err(Error::InsufficientRange(format!(
            "{} usable points, need 3",
            t.len()
        )));
    }
    Ok((t, l))
}

fn range_of(ell: &[f64]) -> f64 {
    let max = ell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ell.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Points with `ℓ ≥ ℓ_max/10`, i.e. the last decade of growth.
fn last_decade(t: &[f64], ell: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = ell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    t.iter()
        .zip(ell)
        .filter(|(_, l)| **l >= max / 10.0)
        .map(|(t, l)| (*t, *l))
        .unzip()
}

/// Slope of `log ℓ` against `log t` over the last decade of `ℓ`.
pub fn fit_power_law(times: &[f64], ell: &[f64]) -> Result<CoarseningFit> {
    let (t, l) = positive(times, ell)?;
    let (wt, wl) = last_decade(&t, &l);
    if wt.len() < 3 {
        return Err(Error::InsufficientRange("fewer than 3 points in the last decade".into()));
    }
    let x: Vec<f64> = wt.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = wl.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&x, &y);
    Ok(CoarseningFit {
        regime: Regime::PowerLaw,
        beta_hat: fit.slope,
        beta_expected: None,
        r_squared: fit.r_squared,
        t_gel: None,
        window: (wt[0], wt[wt.len() - 1]),
        points: wt.len(),
        dynamic_range: range_of(&l),
    })
}

/// Slope of `log ℓ` against `t` over all points with `t ≥ t_min`.
pub fn fit_exponential(times: &[f64], ell: &[f64], t_min: f64) -> Result<CoarseningFit> {
    let (t, l) = positive(times, ell)?;
    let (wt, wl): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(&l)
        .filter(|(t, _)| **t >= t_min)
        .map(|(t, l)| (*t, *l))
        .unzip();
    if wt.len() < 3 {
        return Err(Error::InsufficientRange("fewer than 3 points in the window".into()));
    }
    let y: Vec<f64> = wl.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&wt, &y);
    Ok(CoarseningFit {
        regime: Regime::Exponential,
        beta_hat: fit.slope,
        beta_expected: None,
        r_squared: fit.r_squared,
        t_gel: None,
        window: (wt[0], wt[wt.len() - 1]),
        points: wt.len(),
        dynamic_range: range_of(&l),
    })
}

/// Fits `log ℓ = a + β log(T − t)` with `T > t_last` found by a scalar
/// search on the residual sum of squares of the inner linear fit.
pub fn fit_gelation(times: &[f64], ell: &[f64]) -> Result<CoarseningFit> {
    let (t, l) = positive(times, ell)?;
    let y: Vec<f64> = l.iter().map(|v| v.ln()).collect();
    let t_last = t[t.len() - 1];
    let span = t_last - t[0];
    let sse = |offset: f64| -> f64 {
        let x: Vec<f64> = t.iter().map(|v| (t_last + offset - v).ln()).collect();
        linear_fit(&x, &y).sse
    };
    // Coarse log-spaced scan, then golden-section refinement around the best.
    let lo = (span * 1e-6).max(1e-12);
    let hi = span * 20.0;
    let scan = 400;
    let offsets: Vec<f64> = (0..=scan)
        .map(|i| lo * (hi / lo).powf(i as f64 / scan as f64))
        .collect();
    let best = (0..offsets.len())
        .min_by(|&a, &b| sse(offsets[a]).total_cmp(&sse(offsets[b])))
        .unwrap_or(0);
    let mut a = offsets[best.saturating_sub(1)];
    let mut b = offsets[(best + 1).min(scan)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    for _ in 0..200 {
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
        if (b - a).abs() <= 1e-14 * (t_last + b) {
            break;
        }
    }
    let offset = 0.5 * (a + b);
    let x: Vec<f64> = t.iter().map(|v| (t_last + offset - v).ln()).collect();
    let fit = linear_fit(&x, &y);
    Ok(CoarseningFit {
        regime: Regime::Gelation,
        beta_hat: fit.slope,
        beta_expected: None,
        r_squared: fit.r_squared,
        t_gel: Some(t_last + offset),
        window: (t[0], t_last),
        points: t.len(),
        dynamic_range: range_of(&l),
    })
}

/// Fits the coarsening law for `γ` and compares with `1/(3 − 2γ)`.
///
/// Power-law and gelation fits need `ℓ` to grow by at least a decade over
/// the input; shorter inputs are reported as [`Error::InsufficientRange`].
pub fn fit_coarsening(times: &[f64], ell: &[f64], gamma: f64) -> Result<CoarseningFit> {
    let regime = Regime::of(gamma);
    let (_, l) = positive(times, ell)?;
    let range = range_of(&l);
    if matches!(regime, Regime::PowerLaw | Regime::Gelation) && range < 10.0 {
        return Err(Error::InsufficientRange(format!(
            "ℓ grows by a factor {range:.3}, need 10"
        )));
    }
    let mut fit = match regime {
        Regime::PowerLaw => fit_power_law(times, ell)?,
        Regime::Exponential => fit_exponential(times, ell, 0.0)?,
        Regime::Gelation => fit_gelation(times, ell)?,
        Regime::Instantaneous => {
            return Err(Error::InvalidParameter(format!(
                "γ = {gamma} > 2 has no coarsening law to fit"
            )))
        }
    };
    fit.beta_expected = expected_beta(gamma);
    info!(
        "coarsening fit γ={gamma}: window [{}, {}] with {} points, β̂ = {}",
        fit.window.0, fit.window.1, fit.points, fit.beta_hat
    );
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_and_expected_exponents() {
        assert_eq!(Regime::of(1.0), Regime::PowerLaw);
        assert_eq!(Regime::of(1.5), Regime::Exponential);
        assert_eq!(Regime::of(1.75), Regime::Gelation);
        assert_eq!(Regime::of(2.5), Regime::Instantaneous);
        assert_eq!(expected_beta(1.0), Some(1.0));
        assert_eq!(expected_beta(0.5), Some(0.5));
        assert_eq!(expected_beta(1.75), Some(-2.0));
    }

    #[test]
    fn exact_power_law_is_recovered() {
        for beta in [0.5, 1.0, 0.8] {
            let t: Vec<f64> = (1..=200).map(|i| i as f64 * 0.5).collect();
            let l: Vec<f64> = t.iter().map(|t| 1.3 * t.powf(beta)).collect();
            let fit = fit_coarsening(&t, &l, (3.0 - 1.0 / beta) / 2.0).unwrap();
            assert!((fit.beta_hat - beta).abs() < 1e-6, "{beta}: {}", fit.beta_hat);
        }
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let l: Vec<f64> = t.iter().map(|t| 2.0 * (0.9 * t).exp()).collect();
        let fit = fit_coarsening(&t, &l, 1.5).unwrap();
        assert!((fit.beta_hat - 0.9).abs() < 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn exact_gelation_is_recovered() {
        let t_gel = 0.8;
        let t: Vec<f64> = (1..=79).map(|i| i as f64 * 0.01).collect();
        let l: Vec<f64> = t.iter().map(|t| 0.5 * (t_gel - t).powf(-2.0)).collect();
        let fit = fit_coarsening(&t, &l, 1.75).unwrap();
        assert!((fit.beta_hat + 2.0).abs() < 1e-6, "{}", fit.beta_hat);
        assert!((fit.t_gel.unwrap() - t_gel).abs() < 1e-6);
    }

    #[test]
    fn short_growth_is_reported_not_fitted() {
        let t: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let l: Vec<f64> = t.iter().map(|t| 1.0 + 0.1 * t).collect();
        assert!(matches!(fit_coarsening(&t, &l, 1.0), Err(Error::InsufficientRange(_))));
        assert!(fit_coarsening(&t, &l, 2.5).is_err());
    }
}
