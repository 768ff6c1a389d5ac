use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::stats::CompensatedSum;

/// `μ_k = Σ_{l=1..K} c(k,l) f_l` for `k = 0..=K`.
pub fn mu_vector(f: &[f64], kernel: &Kernel) -> Vec<f64> {
    (0..f.len())
        .map(|k| {
            f.iter()
                .enumerate()
                .skip(1)
                .map(|(l, &v)| kernel.rate(k, l) * v)
                .collect::<CompensatedSum>()
                .value()
        })
        .collect()
}

fn product_mu(f: &[f64], kernel: &Kernel) -> Result<Vec<f64>> {
    if kernel.separable_gamma().is_none() {
        return Err(Error::InvalidKernel("product fast path needs a product kernel".into()));
    }
    let power = |k: usize| kernel.product_power(k).unwrap_or(0.0);
    let m_gamma: f64 = f.iter().enumerate().skip(1).map(|(k, &v)| power(k) * v).sum();
    Ok((0..f.len()).map(|k| power(k) * m_gamma).collect())
}

fn hierarchy(f: &[f64], mu: &[f64], out: &mut [f64]) -> f64 {
    let top = f.len() - 1;
    for k in 0..=top {
        let up = if k < top { mu[k + 1] * f[k + 1] } else { 0.0 };
        let down = if k > 0 { mu[k - 1] * f[k - 1] } else { 0.0 };
        out[k] = up + down - 2.0 * mu[k] * f[k];
    }
    mu[top] * f[top]
}

/// Right-hand side of the truncated master equation
/// `μ_{k+1}f_{k+1} + μ_{k−1}f_{k−1} − 2μ_k f_k` with `f_{−1} = f_{K+1} = 0`.
///
/// Returns the flux `μ_K f_K` lost through the truncation boundary; it
/// carries mass at rate `(K+1)` times the flux.
pub fn edg_rhs(f: &[f64], kernel: &Kernel, out: &mut [f64]) -> f64 {
    hierarchy(f, &mu_vector(f, kernel), out)
}

/// [`edg_rhs`] for product kernels: `μ_k = k^γ m_γ`.
pub fn edg_rhs_product(f: &[f64], kernel: &Kernel, out: &mut [f64]) -> Result<f64> {
    Ok(hierarchy(f, &product_mu(f, kernel)?, out))
}

/// Right-hand side of the size-biased master equation, term by term.
///
/// `p` and `f` share the truncation `K`; `p[0]` is ignored and `out[0]` is
/// zero. Cost is `O(K²)`. Returns the probability flux of `p` through the
/// truncation boundary.
pub fn sbm_rhs(p: &[f64], f: &[f64], kernel: &Kernel, out: &mut [f64]) -> f64 {
    let top = f.len() - 1;
    debug_assert_eq!(p.len(), f.len());
    let mu = mu_vector(f, kernel);
    // Σ_l (1/l) c(l, m) p_l for m = 0..=K.
    let relocation: Vec<f64> = (0..=top)
        .map(|m| {
            (1..=top)
                .map(|l| kernel.rate(l, m) * p[l] / l as f64)
                .collect::<CompensatedSum>()
                .value()
        })
        .collect();
    out[0] = 0.0;
    for k in 1..=top {
        let kf = k as f64;
        let from_below = if k >= 2 { mu[k - 1] * p[k - 1] } else { 0.0 };
        let from_above = if k < top {
            kf / (kf + 1.0) * mu[k + 1] * p[k + 1]
        } else {
            0.0
        };
        let relocated_in = relocation[k - 1] * f[k - 1];
        let leave: f64 = (1..=top + 1)
            .map(|l| kernel.rate(k, l - 1) * f[l - 1])
            .collect::<CompensatedSum>()
            .value()
            / kf;
        let loss = mu[k] + (kf - 1.0) / kf * mu[k] + leave;
        out[k] = from_below + from_above + relocated_in - loss * p[k];
    }
    mu[top] * p[top] + relocation[top] * f[top]
}

/// [`sbm_rhs`] for product kernels in `O(K)`.
pub fn sbm_rhs_product(p: &[f64], f: &[f64], kernel: &Kernel, out: &mut [f64]) -> Result<f64> {
    let top = f.len() - 1;
    let mu = product_mu(f, kernel)?;
    let power = |k: usize| kernel.product_power(k).unwrap_or(0.0);
    let a: f64 = (1..=top).map(|l| power(l) * p[l] / l as f64).sum();
    out[0] = 0.0;
    for k in 1..=top {
        let kf = k as f64;
        let from_below = if k >= 2 { mu[k - 1] * p[k - 1] } else { 0.0 };
        let from_above = if k < top {
            kf / (kf + 1.0) * mu[k + 1] * p[k + 1]
        } else {
            0.0
        };
        let relocated_in = a * power(k - 1) * f[k - 1];
        let loss = mu[k] + (kf - 1.0) / kf * mu[k] + mu[k] / kf;
        out[k] = from_below + from_above + relocated_in - loss * p[k];
    }
    Ok(mu[top] * p[top] + a * power(top) * f[top])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_profile(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let raw: Vec<f64> = (0..len)
            .map(|k| rng.random::<f64>() * (-(k as f64) / (len as f64 / 6.0)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    fn sup(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn delta_one_linear() {
        let k = Kernel::product(1.0).unwrap();
        let f = [0.0, 1.0, 0.0, 0.0];
        let mut out = [0.0; 4];
        let flux = edg_rhs(&f, &k, &mut out);
        assert_eq!(out, [1.0, -2.0, 1.0, 0.0]);
        assert_eq!(flux, 0.0);
    }

    #[test]
    fn delta_one_quadratic() {
        let k = Kernel::product(2.0).unwrap();
        let f = [0.0, 1.0, 0.0, 0.0];
        let mut out = [0.0; 4];
        edg_rhs_product(&f, &k, &mut out).unwrap();
        assert_eq!(out[2], 1.0);
        assert_eq!(out[1], -2.0);
    }

    #[test]
    fn empty_profile_is_stationary() {
        let k = Kernel::product(1.5).unwrap();
        let f = [1.0, 0.0, 0.0];
        let mut out = [9.0; 3];
        edg_rhs(&f, &k, &mut out);
        assert_eq!(out, [0.0; 3]);
        edg_rhs_product(&f, &k, &mut out).unwrap();
        assert_eq!(out, [0.0; 3]);
    }

    #[test]
    fn product_path_needs_product_kernel() {
        let table = Kernel::from_upper_triangle(
            2,
            &[(0, 0, 0.0), (0, 1, 0.0), (0, 2, 0.0), (1, 1, 1.0), (1, 2, 1.0), (2, 2, 1.0)],
            crate::kernel::GrowthBounds::new(0.0, 0.0, 1.0).unwrap(),
        )
        .unwrap();
        let mut out = [0.0; 3];
        assert!(edg_rhs_product(&[0.0, 1.0, 0.0], &table, &mut out).is_err());
    }

    #[test]
    fn product_and_general_agree() {
        for gamma in [0.5, 1.0, 1.5] {
            let kernel = Kernel::product(gamma).unwrap();
            for seed in 0..100 {
                let f = random_profile(201, seed);
                let mut a = vec![0.0; 201];
                let mut b = vec![0.0; 201];
                let fa = edg_rhs(&f, &kernel, &mut a);
                let fb = edg_rhs_product(&f, &kernel, &mut b).unwrap();
                let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                assert!(sup(&diff) <= 1e-12 * sup(&a), "gamma {gamma} seed {seed}");
                assert!((fa - fb).abs() <= 1e-12 * fa.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn size_biased_point_mass() {
        let k = Kernel::product(1.0).unwrap();
        let f = [0.0, 1.0, 0.0];
        let p = [0.0, 1.0, 0.0];
        let mut out = [0.0; 3];
        sbm_rhs(&p, &f, &k, &mut out);
        assert_eq!(out[1], -2.0);
        assert_eq!(out[2], 2.0);
    }

    proptest! {
        #[test]
        fn telescoping_with_boundary(seed in 0u64..1000, len in 3usize..60, gamma in 0.0f64..2.0) {
            let kernel = Kernel::product(gamma).unwrap();
            let f = random_profile(len, seed);
            let mut out = vec![0.0; len];
            let flux = edg_rhs(&f, &kernel, &mut out);
            let total: f64 = out.iter().sum();
            let mass: f64 = out.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
            let scale = sup(&out).max(1.0) * len as f64;
            prop_assert!((total + flux).abs() <= 1e-12 * scale);
            prop_assert!((mass + len as f64 * flux).abs() <= 1e-12 * scale * len as f64);
        }

        #[test]
        fn size_biased_identity(seed in 0u64..1000, len in 3usize..60, gamma in 0.0f64..2.0) {
            let kernel = Kernel::product(gamma).unwrap();
            let f = random_profile(len, seed);
            let rho: f64 = f.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
            let p: Vec<f64> = f.iter().enumerate().map(|(k, v)| k as f64 * v / rho).collect();
            let mut df = vec![0.0; len];
            let mut dp = vec![0.0; len];
            let mut dq = vec![0.0; len];
            edg_rhs(&f, &kernel, &mut df);
            let flux = sbm_rhs(&p, &f, &kernel, &mut dp);
            let flux_fast = sbm_rhs_product(&p, &f, &kernel, &mut dq).unwrap();
            let scale = sup(&dp).max(1.0);
            for k in 0..len {
                prop_assert!((dp[k] - k as f64 * df[k] / rho).abs() <= 1e-10 * scale);
                prop_assert!((dp[k] - dq[k]).abs() <= 1e-12 * scale * len as f64);
            }
            let total: f64 = dp.iter().sum();
            prop_assert!((total + flux).abs() <= 1e-12 * scale * len as f64);
            prop_assert!((flux - flux_fast).abs() <= 1e-12 * flux.abs().max(1.0));
        }
    }
}
