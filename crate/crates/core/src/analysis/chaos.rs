use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::par::map_replicas;
use crate::particle::SiteState;
use crate::rng::{rng_from_seed, split_seed};
use crate::stats::tv_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub sites: usize,
    pub particles: usize,
    pub t: f64,
    pub replicas: usize,
    /// Occupations `≥ cap` are lumped into the class `cap`.
    pub cap: usize,
    /// TV between the histogram of `(η_0, η_1)` and the product of its
    /// marginals.
    pub fixed_pair_tv: f64,
    /// The same distance with the joint law estimated from all ordered site
    /// pairs of each replica, `E[n_j(n_k − δ_jk)]/(L(L−1))`. Exchangeability
    /// makes this an unbiased estimate of the fixed-pair law with far less
    /// sampling noise.
    pub exchangeable_tv: f64,
    /// `max_{j,k<cap} |Cov(1{η_0=j}, 1{η_1=k})|` from the exchangeable estimate.
    pub max_cov: f64,
    /// One-site marginal `E[n_j]/L`.
    pub marginal: Vec<f64>,
}

/// Two-site dependence at time `t` from site-level runs with i.i.d. uniform
/// placement. Replica `i` draws its placement from `split(split(seed, i), 0)`
/// and its dynamics from `split(split(seed, i), 1)`.
pub fn two_site_chaos_check(
    kernel: &Kernel,
    sites: usize,
    particles: usize,
    t: f64,
    replicas: usize,
    seed: u64,
    cap: usize,
    jobs: Option<usize>,
) -> Result<ChaosReport> {
    if sites < 2 || replicas == 0 || cap == 0 {
        return Err(Error::InvalidParameter(
            "need two sites, one replica and a positive cap".into(),
        ));
    }
    let width = cap + 1;
    let samples: Vec<Result<(usize, usize, Vec<u64>)>> = map_replicas(replicas, jobs, |i| {
        let s = split_seed(seed, i as u64);
        let mut state = SiteState::init_iid(kernel.clone(), sites, particles, split_seed(s, 0))?;
        let mut rng = rng_from_seed(split_seed(s, 1));
        state.run_until(t, &[t], &mut rng)?;
        let eta = state.occupations();
        let mut counts = vec![0u64; width];
        for &x in eta {
            counts[x.min(cap)] += 1;
        }
        Ok((eta[0].min(cap), eta[1].min(cap), counts))
    });
    let mut pair = vec![0.0; width * width];
    let mut exch = vec![0.0; width * width];
    let mut single = vec![0.0; width];
    let norm_pairs = (sites * (sites - 1)) as f64;
    for sample in samples {
        let (a, b, counts) = sample?;
        pair[a * width + b] += 1.0;
        for j in 0..width {
            let nj = counts[j] as f64;
            single[j] += nj / sites as f64;
            for k in 0..width {
                let nk = counts[k] as f64 - f64::from(j == k);
                exch[j * width + k] += nj * nk / norm_pairs;
            }
        }
    }
    let r = replicas as f64;
    pair.iter_mut().for_each(|v| *v /= r);
    exch.iter_mut().for_each(|v| *v /= r);
    single.iter_mut().for_each(|v| *v /= r);

    let mut ma = vec![0.0; width];
    let mut mb = vec![0.0; width];
    for j in 0..width {
        for k in 0..width {
            ma[j] += pair[j * width + k];
            mb[k] += pair[j * width + k];
        }
    }
    let outer = |x: &[f64], y: &[f64]| -> Vec<f64> {
        x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
    };
    let product = outer(&single, &single);
    let max_cov = (0..cap)
        .flat_map(|j| (0..cap).map(move |k| (j, k)))
        .map(|(j, k)| (exch[j * width + k] - product[j * width + k]).abs())
        .fold(0.0, f64::max);
    Ok(ChaosReport {
        sites,
        particles,
        t,
        replicas,
        cap,
        fixed_pair_tv: tv_distance(&pair, &outer(&ma, &mb)),
        exchangeable_tv: tv_distance(&exch, &product),
        max_cov,
        marginal: single,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_dependence_is_only_the_fixed_n_coupling() {
        let k = Kernel::product(1.0).unwrap();
        let r = two_site_chaos_check(&k, 100, 100, 0.0, 400, 5, 6, Some(1)).unwrap();
        // Multinomial placement: Cov(1{η_a=0}, 1{η_b=0}) = (1−2/L)^N − (1−1/L)^{2N} = O(1/L).
        assert!(r.max_cov < 0.01, "{}", r.max_cov);
        assert!((r.marginal.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let poisson0 = (-1.0f64).exp();
        assert!((r.marginal[0] - poisson0).abs() < 0.02);
    }

    #[test]
    fn exchangeable_estimate_matches_exact_multinomial_pair_law() {
        let k = Kernel::product(1.0).unwrap();
        let (l, n) = (4usize, 3usize);
        let r = two_site_chaos_check(&k, l, n, 0.0, 4000, 9, 3, Some(1)).unwrap();
        // Exact P(η_a = 0, η_b = 0) = (1 − 2/L)^N.
        let p00 = (1.0 - 2.0 / l as f64).powi(n as i32);
        let m0 = (1.0 - 1.0 / l as f64).powi(n as i32);
        let cov = p00 - m0 * m0;
        assert!(r.max_cov >= cov.abs() * 0.5);
        assert!((r.marginal[0] - m0).abs() < 0.02);
    }

    #[test]
    fn rejects_degenerate_input() {
        let k = Kernel::product(1.0).unwrap();
        assert!(two_site_chaos_check(&k, 1, 1, 0.0, 1, 0, 3, None).is_err());
    }
}
