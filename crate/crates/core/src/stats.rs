//! Small numerical helpers shared by the observables and the analysis layer.

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Total variation distance `½ Σ |p_k − q_k|`; the shorter vector is
/// zero-padded.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * l1_distance(p, q)
}

pub fn l1_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    compensated_sum((0..n).map(|k| {
        let a = p.get(k).copied().unwrap_or(0.0);
        let b = q.get(k).copied().unwrap_or(0.0);
        (a - b).abs()
    }))
}

pub fn sup_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    (0..n)
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// Normalized histogram of nonnegative integer samples.
pub fn histogram(samples: &[usize]) -> Vec<f64> {
    let len = samples.iter().copied().max().map_or(0, |m| m + 1);
    let mut h = vec![0.0; len];
    for &s in samples {
        h[s] += 1.0;
    }
    let n = samples.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Linear interpolation quantile (type 7) of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianEstimate {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Distribution-free standard error from the order-statistic 95%
    /// confidence interval, `(x_(hi) − x_(lo)) / (2·1.96)`.
    pub std_error: f64,
}

pub fn median_estimate(samples: &[f64]) -> MedianEstimate {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let half_width = 1.96 * (n as f64).sqrt() / 2.0;
    let centre = n as f64 / 2.0;
    let lo = ((centre - half_width).floor().max(0.0) as usize).min(n - 1);
    let hi = ((centre + half_width).ceil() as usize).min(n - 1);
    MedianEstimate {
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        std_error: (sorted[hi] - sorted[lo]) / (2.0 * 1.96),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Sum of squared residuals.
    pub sse: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two points for a line");
    let mx = mean(x);
    let my = mean(y);
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = compensated_sum(
        x.iter()
            .zip(y)
            .map(|(a, b)| (b - slope * a - intercept).powi(2)),
    );
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        r_squared,
        sse,
    }
}
