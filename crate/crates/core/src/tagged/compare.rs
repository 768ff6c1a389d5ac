use serde::{Deserialize, Serialize};

use crate::stats::tv_distance;

/// One row of a finite-`L` versus limit comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedComparison {
    pub t: f64,
    #[serde(rename = "TV")]
    pub tv: f64,
    #[serde(rename = "L")]
    pub sites: usize,
    pub replicas: usize,
}

/// Empirical law of `W` indexed by size.
pub fn law_from_samples(samples: &[usize]) -> Vec<f64> {
    crate::stats::histogram(samples)
}

/// Total variation between the empirical law of `samples` and `p`.
pub fn tagged_law_tv(samples: &[usize], p: &[f64]) -> f64 {
    tv_distance(&law_from_samples(samples), p)
}
